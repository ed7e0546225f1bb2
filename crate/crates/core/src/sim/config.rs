//! Scenario configuration files.
//!
//! Configurations are TOML documents:
//!
//! ```toml
//! [grid]
//! origin = [-0.5, -0.5]
//! extent = [1.0, 1.0]
//! cells = [50, 50]
//!
//! [potentials]
//! w1 = { kind = "newtonian", scale = 0.1 }
//! w2 = { kind = "newtonian", scale = 0.1 }
//! k = { kind = "newtonian", scale = 1.0 }
//!
//! [model]
//! beta = 0.3
//! velocity_path = "direct"   # direct | fast | both
//! weighting = "volume"       # volume | unit
//!
//! [time]
//! t_final = 1.0
//! dt = 0.005                 # or: cfl_fraction = 0.9
//!
//! [species1]
//! normalize = true
//! [[species1.measure]]
//! kind = "dirac"
//! location = [0.0, 0.0]
//!
//! [output]
//! dir = "out/test1"
//! snapshot_every = 20
//! diagnostics_every = 1
//! invariants = "warn"        # warn | fatal
//!
//! [convergence]
//! levels = 4
//! ```
//!
//! A species without `measure` entries starts empty.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::init::InitialMeasure;
use crate::mesh::Grid;
use crate::potentials::Potential;
use crate::scheme::{cfl_max_dt, DtPolicy, CFL_REL_TOL};
use crate::velocity::{VelocityPath, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantPolicy {
    #[default]
    Warn,
    Fatal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesInit {
    pub measure: Option<InitialMeasure>,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_every: u64,
    pub diagnostics_every: u64,
    pub invariants: InvariantPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid,
    pub w1: Potential,
    pub w2: Potential,
    pub k: Potential,
    pub beta: f64,
    pub species1: SpeciesInit,
    pub species2: SpeciesInit,
    pub dt_policy: DtPolicy,
    pub t_final: f64,
    pub velocity_path: VelocityPath,
    pub weighting: Weighting,
    pub output: OutputConfig,
    pub convergence_levels: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    potentials: RawPotentials,
    model: RawModel,
    time: RawTime,
    #[serde(default)]
    species1: RawSpecies,
    #[serde(default)]
    species2: RawSpecies,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    convergence: RawConvergence,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    origin: Spanned<Vec<f64>>,
    extent: Spanned<Vec<f64>>,
    cells: Spanned<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotentials {
    w1: Spanned<Potential>,
    w2: Spanned<Potential>,
    k: Spanned<Potential>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    beta: Spanned<f64>,
    #[serde(default)]
    velocity_path: VelocityPath,
    #[serde(default)]
    weighting: Weighting,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_final: Spanned<f64>,
    dt: Option<Spanned<f64>>,
    cfl_fraction: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    #[serde(default = "yes")]
    normalize: bool,
    measure: Option<Spanned<Vec<InitialMeasure>>>,
}

impl Default for RawSpecies {
    fn default() -> Self {
        Self {
            normalize: true,
            measure: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default = "default_dir")]
    dir: PathBuf,
    #[serde(default = "default_snapshot_every")]
    snapshot_every: Spanned<u64>,
    #[serde(default = "default_every")]
    diagnostics_every: Spanned<u64>,
    #[serde(default)]
    invariants: InvariantPolicy,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_every: default_snapshot_every(),
            diagnostics_every: default_every(),
            invariants: InvariantPolicy::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    #[serde(default = "default_levels")]
    levels: Spanned<usize>,
}

impl Default for RawConvergence {
    fn default() -> Self {
        Self {
            levels: default_levels(),
        }
    }
}

fn yes() -> bool {
    true
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_snapshot_every() -> Spanned<u64> {
    Spanned::new(0..0, 100)
}
fn default_every() -> Spanned<u64> {
    Spanned::new(0..0, 1)
}
fn default_levels() -> Spanned<usize> {
    Spanned::new(0..0, 4)
}

/// 1-based line containing byte offset `span.start`.
fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> Error {
        Error::Config {
            line: line_of(self.text, span),
            message: message.into(),
        }
    }
}

impl SimConfig {
    /// Parses and validates a configuration, including the CFL condition of a
    /// fixed time step.
    pub fn parse(text: &str) -> Result<Self> {
        let config = Self::parse_unchecked(text)?;
        if let Some((dt, max_dt)) = config.cfl_violation() {
            let line = text
                .lines()
                .position(|l| l.trim_start().starts_with("dt"))
                .map_or(0, |p| p + 1);
            return Err(Error::Config {
                line,
                message: format!("dt = {dt} violates the CFL condition (max {max_dt})"),
            });
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Parses and validates everything except the CFL condition.
    pub fn parse_unchecked(text: &str) -> Result<Self> {
        let ctx = Ctx { text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| line_of(text, s)),
            message: e.message().to_string(),
        })?;

        let g = &raw.grid;
        let dim = g.origin.get_ref().len();
        if !(1..=2).contains(&dim) {
            return Err(ctx.err(
                g.origin.span(),
                format!("dimension must be 1 or 2, got {dim}"),
            ));
        }
        if g.extent.get_ref().len() != dim {
            return Err(ctx.err(g.extent.span(), format!("extent needs {dim} entries")));
        }
        if g.cells.get_ref().len() != dim {
            return Err(ctx.err(g.cells.span(), format!("cells needs {dim} entries")));
        }
        if g.extent.get_ref().iter().any(|&e| !(e > 0.0)) {
            return Err(ctx.err(g.extent.span(), "extent must be positive"));
        }
        let grid = Grid::from_extent(
            g.origin.get_ref().clone(),
            g.extent.get_ref().clone(),
            g.cells.get_ref().clone(),
        )
        .map_err(|e| ctx.err(g.cells.span(), e.to_string()))?;

        let potential = |p: &Spanned<Potential>| -> Result<Potential> {
            let v = *p.get_ref();
            Potential::new(v.kind, v.scale).map_err(|e| ctx.err(p.span(), e.to_string()))
        };
        let w1 = potential(&raw.potentials.w1)?;
        let w2 = potential(&raw.potentials.w2)?;
        let k = potential(&raw.potentials.k)?;

        let beta = *raw.model.beta.get_ref();
        if !(0.0..1.0).contains(&beta) {
            return Err(ctx.err(
                raw.model.beta.span(),
                format!("beta must lie in [0, 1), got {beta}"),
            ));
        }

        let t_final = *raw.time.t_final.get_ref();
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(ctx.err(
                raw.time.t_final.span(),
                format!("t_final must be >= 0, got {t_final}"),
            ));
        }
        let dt_policy = match (&raw.time.dt, &raw.time.cfl_fraction) {
            (Some(dt), None) => {
                let v = *dt.get_ref();
                if !(v.is_finite() && v > 0.0) {
                    return Err(ctx.err(dt.span(), format!("dt must be positive, got {v}")));
                }
                DtPolicy::Fixed(v)
            }
            (None, Some(theta)) => {
                let v = *theta.get_ref();
                if !(v > 0.0 && v <= 1.0) {
                    return Err(ctx.err(
                        theta.span(),
                        format!("cfl_fraction must lie in (0, 1], got {v}"),
                    ));
                }
                DtPolicy::CflFraction(v)
            }
            (Some(dt), Some(_)) => {
                return Err(ctx.err(dt.span(), "give either dt or cfl_fraction, not both"))
            }
            (None, None) => {
                return Err(ctx.err(raw.time.t_final.span(), "[time] needs dt or cfl_fraction"))
            }
        };

        let species = |s: &RawSpecies| -> Result<SpeciesInit> {
            let Some(spanned) = &s.measure else {
                return Ok(SpeciesInit {
                    measure: None,
                    normalize: s.normalize,
                });
            };
            let parts = spanned.get_ref();
            for m in parts {
                check_measure_dims(m, dim).map_err(|msg| ctx.err(spanned.span(), msg))?;
            }
            let measure = match parts.len() {
                0 => None,
                1 => Some(parts[0].clone()),
                _ => Some(InitialMeasure::Sum {
                    parts: parts.clone(),
                }),
            };
            Ok(SpeciesInit {
                measure,
                normalize: s.normalize,
            })
        };
        let species1 = species(&raw.species1)?;
        let species2 = species(&raw.species2)?;

        for cadence in [&raw.output.snapshot_every, &raw.output.diagnostics_every] {
            if *cadence.get_ref() < 1 {
                return Err(ctx.err(cadence.span(), "cadences must be >= 1"));
            }
        }
        let levels = *raw.convergence.levels.get_ref();
        if levels < 2 {
            return Err(ctx.err(raw.convergence.levels.span(), "levels must be >= 2"));
        }

        Ok(SimConfig {
            grid,
            w1,
            w2,
            k,
            beta,
            species1,
            species2,
            dt_policy,
            t_final,
            velocity_path: raw.model.velocity_path,
            weighting: raw.model.weighting,
            output: OutputConfig {
                dir: raw.output.dir,
                snapshot_every: *raw.output.snapshot_every.get_ref(),
                diagnostics_every: *raw.output.diagnostics_every.get_ref(),
                invariants: raw.output.invariants,
            },
            convergence_levels: levels,
        })
    }

    /// CFL budget from the certified Lipschitz bounds.
    pub fn cfl_budget(&self) -> Result<f64> {
        Ok(cfl_max_dt(
            &self.grid,
            self.w1.certify_lipschitz_bound()?,
            self.w2.certify_lipschitz_bound()?,
            self.k.certify_lipschitz_bound()?,
        ))
    }

    /// `(dt, max_dt)` when a fixed step exceeds the budget.
    pub fn cfl_violation(&self) -> Option<(f64, f64)> {
        let max_dt = self.cfl_budget().ok()?;
        match self.dt_policy {
            DtPolicy::Fixed(dt) if dt > max_dt * (1.0 + CFL_REL_TOL) => Some((dt, max_dt)),
            _ => None,
        }
    }
}

fn check_measure_dims(m: &InitialMeasure, dim: usize) -> std::result::Result<(), String> {
    let check = |p: &[f64], what: &str| {
        if p.len() == dim {
            Ok(())
        } else {
            Err(format!("{what} needs {dim} coordinates, got {}", p.len()))
        }
    };
    match m {
        InitialMeasure::Dirac { location, .. } => check(location, "location"),
        InitialMeasure::UniformBall { center, .. } => check(center, "center"),
        InitialMeasure::UniformBox { lo, hi, .. } => check(lo, "lo").and(check(hi, "hi")),
        InitialMeasure::Sum { parts } => parts.iter().try_for_each(|p| check_measure_dims(p, dim)),
    }
}
