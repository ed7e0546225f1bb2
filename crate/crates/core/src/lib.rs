//! Upwind finite-volume solver for two-species nonlocal transport systems.
//!
//! Each species `α` is transported by a velocity built from interaction
//! potentials: `W1`, `W2` act within a species and `K` couples them, with
//! species 2 fleeing species 1 at mobility `β`.
//!
//! ```text
//! ∂t ρ1 + div(ρ1 a1) = 0,   a1 = −∇W1 * ρ1 − ∇K * ρ2
//! ∂t ρ2 + div(ρ2 a2) = 0,   a2 = −∇W2 * ρ2 + β ∇K * ρ1
//! ```
//!
//! The crate is organized bottom-up: [`mesh`] and [`potentials`] describe
//! geometry and interactions, [`velocity`] evaluates the discrete
//! convolutions, [`scheme`] advances the upwind update, [`diagnostics`]
//! tracks the quantities the scheme is known to preserve, and [`sim`] /
//! [`convergence`] drive complete runs.

pub mod convergence;
pub mod diagnostics;
pub mod error;
pub mod init;
pub mod mesh;
pub mod potentials;
pub mod scheme;
pub mod sim;
pub mod velocity;

pub use error::{Error, Result};
pub use mesh::Grid;
pub use potentials::{Potential, PotentialKind};
pub use scheme::{DensityField, SimState};
