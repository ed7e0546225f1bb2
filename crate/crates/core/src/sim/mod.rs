//! Configured scenarios: configuration files, the run driver, snapshots and
//! the command line.

pub mod cli;
pub mod config;
pub mod driver;
pub mod snapshot;

pub use config::SimConfig;
pub use driver::{execute, simulate, ExecuteOptions, Outcome, RunSummary};

/// Scenarios shipped with the binary, addressable by name on the command line.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("test1", include_str!("../../configs/test1.toml")),
    ("test2", include_str!("../../configs/test2.toml")),
    (
        "two_dirac_1d",
        include_str!("../../configs/two_dirac_1d.toml"),
    ),
];

pub fn scenario(name: &str) -> Option<&'static str> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}
