//! Conserved and bounded quantities of a running simulation.
//!
//! Every sum runs over cells in flat-index order with compensated
//! accumulation, so repeated runs produce identical records.
//!
//! Two first moments are tracked. `weighted_com = Σ x (β ρ1 + ρ2) m(C)` is the
//! weighted center of mass used as the reference point for
//! `second_moment`. `conserved_moment = Σ x (β ρ1 - ρ2) m(C)` is the moment
//! the scheme preserves exactly: the self-interaction terms cancel because
//! the gradients are odd, and the pursuit of species 1 (`-∇K * ρ2`) balances
//! against the flight of species 2 (`+β ∇K * ρ1`) only with the minus sign.

use std::fmt::Write as _;

use crate::mesh::Grid;
use crate::scheme::{compensated_sum, SimState};
use crate::velocity::{InteractionModel, Velocities};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub step: u64,
    pub mass1: f64,
    pub mass2: f64,
    pub min1: f64,
    pub min2: f64,
    /// `Σ_J x_J (β ρ1 + ρ2) m(C_J)`.
    pub weighted_com: Vec<f64>,
    /// `Σ_J x_J (β ρ1 - ρ2) m(C_J)`.
    pub conserved_moment: Vec<f64>,
    /// Normalized center of mass of each species (NaN without mass).
    pub com1: Vec<f64>,
    pub com2: Vec<f64>,
    pub max_speed1: f64,
    pub max_speed2: f64,
    pub speed_bound1: f64,
    pub speed_bound2: f64,
    /// Fewest cells between an occupied cell and the edge of the box.
    pub support_margin: usize,
    /// `Σ_J |x_J - c|² (β ρ1 + ρ2) m(C_J)` about the normalized weighted center `c`.
    pub second_moment: f64,
    /// Spatial total variation of each species, including the jump to the
    /// empty exterior.
    pub tv1: f64,
    pub tv2: f64,
}

pub fn record(
    model: &InteractionModel,
    state: &SimState,
    velocities: &Velocities,
) -> DiagnosticsRecord {
    let grid = state.grid();
    let dim = grid.dimension();
    let vol = grid.cell_volume();
    let beta = state.beta;
    let r1 = state.rho1.values();
    let r2 = state.rho2.values();
    let centers: Vec<Vec<f64>> = (0..grid.cell_count()).map(|l| grid.center_of(l)).collect();

    let moment = |weight: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..dim)
            .map(|axis| compensated_sum((0..r1.len()).map(|l| centers[l][axis] * weight(l) * vol)))
            .collect()
    };
    let weighted_com = moment(&|l| beta * r1[l] + r2[l]);
    let conserved_moment = moment(&|l| beta * r1[l] - r2[l]);

    let mass1 = state.rho1.mass();
    let mass2 = state.rho2.mass();
    let com1: Vec<f64> = moment(&|l| r1[l]).into_iter().map(|m| m / mass1).collect();
    let com2: Vec<f64> = moment(&|l| r2[l]).into_iter().map(|m| m / mass2).collect();

    let total_weight = beta * mass1 + mass2;
    let second_moment = if total_weight > 0.0 {
        let c: Vec<f64> = weighted_com.iter().map(|m| m / total_weight).collect();
        compensated_sum((0..r1.len()).map(|l| {
            let d2: f64 = centers[l]
                .iter()
                .zip(&c)
                .map(|(x, ci)| (x - ci).powi(2))
                .sum();
            d2 * (beta * r1[l] + r2[l]) * vol
        }))
    } else {
        0.0
    };

    let (speed_bound1, speed_bound2) = model.speed_bounds(state);
    DiagnosticsRecord {
        time: state.time,
        step: state.step_index,
        mass1,
        mass2,
        min1: state.rho1.min(),
        min2: state.rho2.min(),
        weighted_com,
        conserved_moment,
        com1,
        com2,
        max_speed1: velocities.species1.max_abs(),
        max_speed2: velocities.species2.max_abs(),
        speed_bound1,
        speed_bound2,
        support_margin: support_margin(grid, r1, r2),
        second_moment,
        tv1: total_variation(grid, r1),
        tv2: total_variation(grid, r2),
    }
}

/// Fewest cells between any occupied cell and the edge of the box. An empty
/// state reports the largest cell count along any axis.
pub fn support_margin(grid: &Grid, rho1: &[f64], rho2: &[f64]) -> usize {
    let cells = grid.cells();
    let mut margin = cells.iter().copied().max().unwrap_or(0);
    for l in 0..grid.cell_count() {
        if rho1[l] != 0.0 || rho2[l] != 0.0 {
            for (axis, j) in grid.multi_index(l).into_iter().enumerate() {
                margin = margin.min(j).min(cells[axis] - 1 - j);
            }
        }
    }
    margin
}

/// `Σ_faces |jump| · (face area)`, with zero outside the box.
pub fn total_variation(grid: &Grid, rho: &[f64]) -> f64 {
    let cells = grid.cells();
    let strides = grid.strides();
    let vol = grid.cell_volume();
    let mut terms = Vec::with_capacity(rho.len() * grid.dimension() * 2);
    for (axis, h) in grid.steps().iter().enumerate() {
        let face = vol / h;
        for l in 0..rho.len() {
            let j = (l / strides[axis]) % cells[axis];
            let below = if j == 0 { 0.0 } else { rho[l - strides[axis]] };
            terms.push((rho[l] - below).abs() * face);
            if j + 1 == cells[axis] {
                terms.push(rho[l].abs() * face);
            }
        }
    }
    compensated_sum(terms)
}

/// Per-step tolerances for [`assert_invariants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub mass_rel: f64,
    pub moment_abs: f64,
    pub speed_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_rel: 1e-12,
            moment_abs: 1e-10,
            speed_abs: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    /// Not checked, with an explanation (e.g. mass leaving through the boundary).
    Note,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantReport {
    pub checks: Vec<CheckOutcome>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn notes(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Note)
    }

    fn push(&mut self, name: &'static str, status: CheckStatus, detail: String) {
        self.checks.push(CheckOutcome {
            name,
            status,
            detail,
        });
    }
}

/// Compares two records of the same run. Conservation is only asserted when
/// `prev` is far enough from the boundary that no mass can have left the box
/// in between (one cell per step).
pub fn assert_invariants(
    prev: &DiagnosticsRecord,
    next: &DiagnosticsRecord,
    tol: Tolerances,
) -> InvariantReport {
    use CheckStatus::*;
    let mut report = InvariantReport::default();
    let steps = next.step.saturating_sub(prev.step).max(1) as f64;

    let min = next.min1.min(next.min2);
    if min >= 0.0 {
        report.push("positivity", Pass, String::new());
    } else {
        report.push(
            "positivity",
            Fail,
            format!("negative cell value {min:e} at step {}", next.step),
        );
    }

    for (species, speed, bound) in [
        (1, next.max_speed1, next.speed_bound1),
        (2, next.max_speed2, next.speed_bound2),
    ] {
        if speed <= bound + tol.speed_abs {
            report.push("velocity_bound", Pass, String::new());
        } else {
            report.push(
                "velocity_bound",
                Fail,
                format!("species {species} speed {speed:e} exceeds bound {bound:e}"),
            );
        }
    }

    let interior = prev.support_margin as f64 >= steps;
    for (species, before, after) in [(1, prev.mass1, next.mass1), (2, prev.mass2, next.mass2)] {
        let drift = (after - before).abs();
        let allowed = tol.mass_rel * steps * before.abs();
        if interior {
            if drift <= allowed {
                report.push("mass", Pass, String::new());
            } else {
                report.push(
                    "mass",
                    Fail,
                    format!("species {species} mass drifted by {drift:e} (allowed {allowed:e})"),
                );
            }
        } else if after <= before + allowed {
            report.push(
                "mass",
                Note,
                format!(
                    "boundary outflow of species {species}: {:e}",
                    before - after
                ),
            );
        } else {
            report.push(
                "mass",
                Fail,
                format!(
                    "species {species} mass grew by {:e} near the boundary",
                    after - before
                ),
            );
        }
    }

    let drift = prev
        .conserved_moment
        .iter()
        .zip(&next.conserved_moment)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let allowed = tol.moment_abs * steps;
    if !interior {
        report.push(
            "moment",
            Note,
            "support touches the boundary; moment not checked".into(),
        );
    } else if drift <= allowed {
        report.push("moment", Pass, String::new());
    } else {
        report.push(
            "moment",
            Fail,
            format!("conserved moment drifted by {drift:e} (allowed {allowed:e})"),
        );
    }
    report
}

/// Header of the diagnostics table for a grid of dimension `dim`.
pub fn csv_header(dim: usize) -> String {
    let axes = ["x", "y"];
    let mut cols = vec![
        "time".to_string(),
        "step".into(),
        "mass1".into(),
        "mass2".into(),
        "min1".into(),
        "min2".into(),
    ];
    for prefix in ["com", "moment", "com1", "com2"] {
        for a in &axes[..dim] {
            cols.push(format!("{prefix}_{a}"));
        }
    }
    for c in [
        "max_speed1",
        "max_speed2",
        "speed_bound1",
        "speed_bound2",
        "support_margin",
        "second_moment",
        "tv1",
        "tv2",
    ] {
        cols.push(c.into());
    }
    cols.join(",")
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        let _ = write!(
            row,
            "{},{},{},{},{},{}",
            self.time, self.step, self.mass1, self.mass2, self.min1, self.min2
        );
        for v in [
            &self.weighted_com,
            &self.conserved_moment,
            &self.com1,
            &self.com2,
        ] {
            for x in v {
                let _ = write!(row, ",{x}");
            }
        }
        let _ = write!(
            row,
            ",{},{},{},{},{},{},{},{}",
            self.max_speed1,
            self.max_speed2,
            self.speed_bound1,
            self.speed_bound2,
            self.support_margin,
            self.second_moment,
            self.tv1,
            self.tv2
        );
        row
    }
}
