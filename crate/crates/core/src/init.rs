//! Initial cell averages from measure descriptions.
//!
//! A Dirac mass is deposited whole into the cell containing its location.
//! Uniform shapes use a cell-center membership test: every cell whose center
//! lies in the shape receives the same density, chosen so that the deposited
//! mass equals the shape's mass exactly.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::scheme::{compensated_sum, DensityField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMeasure {
    Dirac {
        location: Vec<f64>,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    UniformBall {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    Sum {
        parts: Vec<InitialMeasure>,
    },
}

fn unit_mass() -> f64 {
    1.0
}

impl InitialMeasure {
    pub fn dirac(location: Vec<f64>, mass: f64) -> Self {
        InitialMeasure::Dirac { location, mass }
    }

    pub fn uniform_ball(center: Vec<f64>, radius: f64, mass: f64) -> Self {
        InitialMeasure::UniformBall {
            center,
            radius,
            mass,
        }
    }

    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>, mass: f64) -> Self {
        InitialMeasure::UniformBox { lo, hi, mass }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            InitialMeasure::Dirac { mass, .. }
            | InitialMeasure::UniformBall { mass, .. }
            | InitialMeasure::UniformBox { mass, .. } => *mass,
            InitialMeasure::Sum { parts } => parts.iter().map(|p| p.total_mass()).sum(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let check_point = |p: &[f64], what: &str| {
            if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!(
                    "{what} must be a finite point of dimension {dim}, got {p:?}"
                )));
            }
            Ok(())
        };
        let check_mass = |m: f64| {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Contract(format!(
                    "mass must be finite and >= 0, got {m}"
                )));
            }
            Ok(())
        };
        match self {
            InitialMeasure::Dirac { location, mass } => {
                check_point(location, "dirac location")?;
                check_mass(*mass)
            }
            InitialMeasure::UniformBall {
                center,
                radius,
                mass,
            } => {
                check_point(center, "ball center")?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Contract(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                check_mass(*mass)
            }
            InitialMeasure::UniformBox { lo, hi, mass } => {
                check_point(lo, "box lo")?;
                check_point(hi, "box hi")?;
                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    return Err(Error::Contract(format!("box lo {lo:?} exceeds hi {hi:?}")));
                }
                check_mass(*mass)
            }
            InitialMeasure::Sum { parts } => parts.iter().try_for_each(|p| p.validate(dim)),
        }
    }
}

/// Cell averages of `measure` on `grid`; with `normalize`, rescaled to unit mass.
pub fn discretize(grid: &Grid, measure: &InitialMeasure, normalize: bool) -> Result<DensityField> {
    measure.validate(grid.dimension())?;
    let mut values = vec![0.0; grid.cell_count()];
    if !deposit(grid, measure, &mut values) {
        return Err(Error::EmptyField);
    }
    let volume = grid.cell_volume();
    let mass = compensated_sum(values.iter().copied()) * volume;
    if normalize {
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        values.iter_mut().for_each(|v| *v /= mass);
    }
    DensityField::from_values(grid, values)
}

/// Adds `measure` into `values`; returns whether any part landed in the domain.
fn deposit(grid: &Grid, measure: &InitialMeasure, values: &mut [f64]) -> bool {
    let volume = grid.cell_volume();
    match measure {
        InitialMeasure::Dirac { location, mass } => match grid.containing_cell(location) {
            Some(j) => {
                let l = grid.linear_index(&j).expect("containing cell is in range");
                values[l] += mass / volume;
                true
            }
            None => {
                warn!("dirac at {location:?} lies outside the domain");
                false
            }
        },
        InitialMeasure::UniformBall {
            center,
            radius,
            mass,
        } => {
            let inside = |x: &[f64]| {
                x.iter()
                    .zip(center)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    <= radius * radius
            };
            deposit_shape(grid, values, *mass, center, inside)
        }
        InitialMeasure::UniformBox { lo, hi, mass } => {
            let inside = |x: &[f64]| {
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *a <= *v && *v <= *b)
            };
            let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            deposit_shape(grid, values, *mass, &mid, inside)
        }
        InitialMeasure::Sum { parts } => {
            let mut any = false;
            for part in parts {
                any |= deposit(grid, part, values);
            }
            any
        }
    }
}

fn deposit_shape(
    grid: &Grid,
    values: &mut [f64],
    mass: f64,
    anchor: &[f64],
    inside: impl Fn(&[f64]) -> bool,
) -> bool {
    let hits: Vec<usize> = (0..grid.cell_count())
        .filter(|&l| inside(&grid.center_of(l)))
        .collect();
    if hits.is_empty() {
        // Smaller than a cell: fall back to a point mass at the anchor.
        return match grid.containing_cell(anchor) {
            Some(j) => {
                warn!(
                    "shape around {anchor:?} contains no cell center; depositing as a point mass"
                );
                values[grid.linear_index(&j).expect("in range")] += mass / grid.cell_volume();
                true
            }
            None => {
                warn!("shape around {anchor:?} lies outside the domain");
                false
            }
        };
    }
    let density = mass / (hits.len() as f64 * grid.cell_volume());
    for l in hits {
        values[l] += density;
    }
    true
}
