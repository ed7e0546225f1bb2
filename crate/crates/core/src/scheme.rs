//! Explicit upwind time stepping.
//!
//! One step reads the time-`n` densities and velocities and writes a fresh
//! time-`n+1` state. Per species and cell, with `ν_i = Δt / Δx_i`,
//! `a⁺ = max(a, 0)` and `a⁻ = max(-a, 0)`:
//!
//! ```text
//! ρ[J]' = ρ[J] - Σ_i ν_i ( a⁺[i,J] ρ[J] - a⁻[i,J+e_i] ρ[J+e_i]
//!                          - a⁺[i,J-e_i] ρ[J-e_i] + a⁻[i,J] ρ[J] )
//! ```
//!
//! evaluated in the equivalent convex form
//! `ρ[J] (1 - Σ_i ν_i |a[i,J]|) + Σ_i ν_i (a⁻[i,J+e_i] ρ[J+e_i] + a⁺[i,J-e_i] ρ[J-e_i])`,
//! which keeps every term nonnegative whenever the realized Courant number
//! `max_J Σ_i ν_i |a[i,J]|` is at most one. Cells outside the box hold no mass.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::velocity::{InteractionModel, Velocities, VelocityField};

/// Relative slack on a declared time step against the CFL budget.
pub const CFL_REL_TOL: f64 = 1e-12;

/// Cell averages of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: Arc::new(grid.clone()),
            values: vec![0.0; grid.cell_count()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::zeros(grid).with_values(values)
    }

    /// Field on the same grid with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.grid.cell_count() {
            return Err(Error::Contract(format!(
                "expected {} cell values, got {}",
                self.grid.cell_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Contract(format!(
                "density values must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Raw access, bypassing the nonnegativity contract. Used for fault
    /// injection in invariant checks.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Compensated sum of the cell values.
    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// `Σ_J ρ[J] m(C_J)`.
    pub fn mass(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Both species at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub time: f64,
    pub step_index: u64,
    /// Mobility of species 2 away from species 1, in `[0, 1)`.
    pub beta: f64,
}

impl SimState {
    pub fn new(rho1: DensityField, rho2: DensityField, beta: f64) -> Result<Self> {
        if rho1.grid() != rho2.grid() {
            return Err(Error::Contract(
                "species densities live on different grids".into(),
            ));
        }
        check_beta(beta)?;
        Ok(Self {
            rho1,
            rho2,
            time: 0.0,
            step_index: 0,
            beta,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.rho1.grid()
    }
}

/// Neumaier summation in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Contract(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    Ok(())
}

/// Largest `Δt` with `(max(ω1, ω2) + κ) Σ_i Δt / Δx_i <= 1`, or `+∞` when all
/// bounds vanish.
pub fn cfl_max_dt(grid: &Grid, omega1: f64, omega2: f64, kappa: f64) -> f64 {
    let speed = omega1.max(omega2) + kappa;
    if speed <= 0.0 {
        return f64::INFINITY;
    }
    let inv_sum: f64 = grid.steps().iter().map(|h| 1.0 / h).sum();
    1.0 / inv_sum / speed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CflGuard {
    /// Refuse steps longer than `max_dt` or with realized Courant number above one.
    Enforce { max_dt: f64 },
    /// No checks. Only for demonstrating what the guard prevents.
    Disabled,
}

/// `max_J Σ_i (Δt / Δx_i) |a[i,J]|`.
pub fn courant_number(grid: &Grid, velocity: &VelocityField, dt: f64) -> f64 {
    (0..grid.cell_count())
        .map(|j| outflow_fraction(grid, velocity, dt, j))
        .fold(0.0, f64::max)
}

#[inline]
fn outflow_fraction(grid: &Grid, velocity: &VelocityField, dt: f64, j: usize) -> f64 {
    let mut s = 0.0;
    for (axis, h) in grid.steps().iter().enumerate() {
        let a = velocity.component(axis)[j];
        s += dt / h * (a.max(0.0) + (-a).max(0.0));
    }
    s
}

/// Upwind update of one species. No checks are performed.
pub fn upwind_update(grid: &Grid, rho: &[f64], velocity: &VelocityField, dt: f64) -> Vec<f64> {
    let cells = grid.cells();
    let strides = grid.strides();
    (0..grid.cell_count())
        .into_par_iter()
        .map(|j| {
            let mut retained = 1.0 - outflow_fraction(grid, velocity, dt, j);
            // A Courant number of exactly one can round to slightly above it.
            if (-CFL_REL_TOL..0.0).contains(&retained) {
                retained = 0.0;
            }
            let mut inflow = 0.0;
            let mut rest = j;
            for (axis, h) in grid.steps().iter().enumerate() {
                let a = velocity.component(axis);
                let ja = rest % cells[axis];
                rest /= cells[axis];
                let nu = dt / h;
                if ja + 1 < cells[axis] {
                    let up = j + strides[axis];
                    inflow += nu * ((-a[up]).max(0.0) * rho[up]);
                }
                if ja > 0 {
                    let down = j - strides[axis];
                    inflow += nu * (a[down].max(0.0) * rho[down]);
                }
            }
            rho[j] * retained + inflow
        })
        .collect()
}

/// Advances both species by `dt` with velocities computed from `state`.
pub fn upwind_step(
    state: &SimState,
    dt: f64,
    velocities: &Velocities,
    guard: CflGuard,
) -> Result<SimState> {
    let grid = state.grid();
    for v in [&velocities.species1, &velocities.species2] {
        if v.dimension() != grid.dimension()
            || v.components().iter().any(|c| c.len() != grid.cell_count())
        {
            return Err(Error::Contract(
                "velocity field does not match the state grid".into(),
            ));
        }
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Contract(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if let CflGuard::Enforce { max_dt } = guard {
        if dt > max_dt * (1.0 + CFL_REL_TOL) {
            return Err(Error::CflViolation { dt, max_dt });
        }
        for v in [&velocities.species1, &velocities.species2] {
            let courant = courant_number(grid, v, dt);
            if courant > 1.0 + CFL_REL_TOL {
                return Err(Error::CflViolation {
                    dt,
                    max_dt: dt / courant,
                });
            }
        }
    }

    let next1 = upwind_update(grid, state.rho1.values(), &velocities.species1, dt);
    let next2 = upwind_update(grid, state.rho2.values(), &velocities.species2, dt);
    let step = state.step_index + 1;
    for (species, values) in [(1, &next1), (2, &next2)] {
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NumericalIntegrity {
                step,
                detail: format!("species {species} cell {j} has value {v:e}"),
            });
        }
    }
    Ok(SimState {
        rho1: state.rho1.with_values(next1)?,
        rho2: state.rho2.with_values(next2)?,
        time: state.time + dt,
        step_index: step,
        beta: state.beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// Fraction `θ ∈ (0, 1]` of the CFL budget.
    CflFraction(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Observe every `observe_every` steps; the initial and final states are
    /// always observed.
    pub observe_every: u64,
    pub guard: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            observe_every: 1,
            guard: true,
        }
    }
}

/// Read-only callback invoked between steps.
pub trait Observer {
    fn observe(&mut self, state: &SimState, velocities: &Velocities) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&SimState, &Velocities) -> Result<()>,
{
    fn observe(&mut self, state: &SimState, velocities: &Velocities) -> Result<()> {
        self(state, velocities)
    }
}

/// Time step a policy resolves to for `state`, after the fail-fast CFL check.
pub fn resolve_dt(
    model: &InteractionModel,
    state: &SimState,
    policy: DtPolicy,
    guard: bool,
) -> Result<f64> {
    let max_dt = model.max_stable_dt(state);
    match policy {
        DtPolicy::Fixed(dt) => {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Contract(format!(
                    "time step must be positive, got {dt}"
                )));
            }
            if guard && dt > max_dt * (1.0 + CFL_REL_TOL) {
                return Err(Error::CflViolation { dt, max_dt });
            }
            Ok(dt)
        }
        DtPolicy::CflFraction(theta) => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::Contract(format!(
                    "CFL fraction must lie in (0, 1], got {theta}"
                )));
            }
            Ok(theta * max_dt)
        }
    }
}

/// Steps `initial` until `t_final`, shortening the last step to land on it.
pub fn run(
    model: &InteractionModel,
    initial: SimState,
    t_final: f64,
    policy: DtPolicy,
    options: RunOptions,
    observer: &mut dyn Observer,
) -> Result<SimState> {
    if !(t_final >= initial.time) {
        return Err(Error::Contract(format!(
            "final time {t_final} precedes the initial time {}",
            initial.time
        )));
    }
    let dt = resolve_dt(model, &initial, policy, options.guard)?;
    let guard = if options.guard {
        CflGuard::Enforce {
            max_dt: model.max_stable_dt(&initial),
        }
    } else {
        CflGuard::Disabled
    };
    let every = options.observe_every.max(1);

    let mut state = initial;
    loop {
        let velocities = model.velocities(&state)?;
        let remaining = t_final - state.time;
        let done = remaining <= 0.0;
        if done || state.step_index.is_multiple_of(every) {
            observer.observe(&state, &velocities)?;
        }
        if done {
            return Ok(state);
        }
        let last = remaining <= dt * (1.0 + 1e-10);
        let h = if last { remaining.min(dt) } else { dt };
        state = upwind_step(&state, h, &velocities, guard)?;
        if last {
            state.time = t_final;
        }
    }
}
