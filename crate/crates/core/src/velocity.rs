//! Discrete macroscopic velocities.
//!
//! For every cell `J` and axis `i`,
//!
//! ```text
//! a1[i, J] = -w Σ_L ( ρ1[L] ∂i W1(x_J - x_L) + ρ2[L] ∂i K(x_J - x_L) )
//! a2[i, J] = -w Σ_L ( ρ2[L] ∂i W2(x_J - x_L) - β ρ1[L] ∂i K(x_J - x_L) )
//! ```
//!
//! where `∂i` is the hatted gradient (zero at the origin) and `w` is the
//! quadrature weight, the cell volume by default. The gradient samples only
//! depend on the integer offset `J - L`, so they are tabulated once per grid
//! in a [`KernelTable`]. Two evaluation paths are provided: a direct sum over
//! occupied source cells, and a zero-padded FFT convolution.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::potentials::Potential;
use crate::scheme::{cfl_max_dt, DensityField, SimState};

/// Largest number of offsets a kernel table may hold.
const MAX_TABLE_ENTRIES: usize = 1 << 28;

/// Absolute agreement required between the two velocity paths.
pub const PATH_AGREEMENT_TOL: f64 = 1e-10;

/// Gradient samples `∂i Ŵ(o ⊙ Δx)` for every offset `o` with `|o_i| < N_i`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    cells: Vec<usize>,
    steps: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    components: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn build(grid: &Grid, potential: &Potential) -> Result<Self> {
        let cells = grid.cells().to_vec();
        let shape: Vec<usize> = cells.iter().map(|&n| 2 * n - 1).collect();
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&l| l <= MAX_TABLE_ENTRIES)
            .ok_or(Error::Resource {
                cells: grid.cell_count(),
            })?;
        let dim = grid.dimension();
        let mut strides = Vec::with_capacity(dim);
        let mut s = 1;
        for &n in &shape {
            strides.push(s);
            s *= n;
        }

        let mut components = vec![vec![0.0; len]; dim];
        let mut x = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for flat in 0..len {
            let mut rest = flat;
            for axis in 0..dim {
                let o = (rest % shape[axis]) as isize - (cells[axis] as isize - 1);
                rest /= shape[axis];
                x[axis] = o as f64 * grid.steps()[axis];
            }
            potential.grad_hat_into(&x, &mut g);
            for axis in 0..dim {
                components[axis][flat] = g[axis];
            }
        }
        Ok(Self {
            cells,
            steps: grid.steps().to_vec(),
            shape,
            strides,
            components,
        })
    }

    pub fn dimension(&self) -> usize {
        self.cells.len()
    }

    /// Sample along `axis` at integer cell offset `offset`.
    pub fn at(&self, axis: usize, offset: &[isize]) -> Option<f64> {
        self.flat_index(offset).map(|k| self.components[axis][k])
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn flat_index(&self, offset: &[isize]) -> Option<usize> {
        if offset.len() != self.dimension() {
            return None;
        }
        let mut k = 0;
        for axis in 0..self.dimension() {
            let shifted = offset[axis] + self.cells[axis] as isize - 1;
            if shifted < 0 || shifted as usize >= self.shape[axis] {
                return None;
            }
            k += shifted as usize * self.strides[axis];
        }
        Some(k)
    }

    fn matches(&self, grid: &Grid) -> bool {
        self.cells == grid.cells() && self.steps == grid.steps()
    }
}

/// Per-axis velocity of one species, stored as `components[axis][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    components: Vec<Vec<f64>>,
}

impl VelocityField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            components: vec![vec![0.0; grid.cell_count()]; grid.dimension()],
        }
    }

    pub fn from_components(components: Vec<Vec<f64>>) -> Self {
        Self { components }
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    /// Largest `|a_i|` over all axes and cells.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute componentwise difference to `other`.
    pub fn max_abs_diff(&self, other: &VelocityField) -> f64 {
        self.components
            .iter()
            .flatten()
            .zip(other.components.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Velocities of both species at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocities {
    pub species1: VelocityField,
    pub species2: VelocityField,
}

impl Velocities {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            species1: VelocityField::zeros(grid),
            species2: VelocityField::zeros(grid),
        }
    }

    pub fn max_abs_diff(&self, other: &Velocities) -> f64 {
        self.species1
            .max_abs_diff(&other.species1)
            .max(self.species2.max_abs_diff(&other.species2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityPath {
    /// Ordered sum over occupied source cells; bit-reproducible.
    #[default]
    Direct,
    /// Zero-padded FFT convolution.
    Fast,
    /// Evaluate both and fail if they disagree by more than [`PATH_AGREEMENT_TOL`].
    Both,
}

/// Tables shared by one evaluation: `W1`, `W2`, `K`.
#[derive(Debug, Clone, Copy)]
pub struct KernelSet<'a> {
    pub w1: &'a KernelTable,
    pub w2: &'a KernelTable,
    pub k: &'a KernelTable,
}

fn check_inputs(rho1: &DensityField, rho2: &DensityField, kernels: KernelSet<'_>) -> Result<()> {
    let grid = rho1.grid();
    if rho2.grid() != grid {
        return Err(Error::Contract(
            "species densities live on different grids".into(),
        ));
    }
    if ![kernels.w1, kernels.w2, kernels.k]
        .iter()
        .all(|t| t.matches(grid))
    {
        return Err(Error::Contract(
            "kernel table was built for a different grid".into(),
        ));
    }
    Ok(())
}

/// Direct `O(N · N_occupied)` evaluation.
///
/// Sources are visited in increasing flat index and both species' terms for
/// a source are combined before accumulation, so the result does not depend
/// on thread scheduling.
pub fn compute_velocities_direct(
    rho1: &DensityField,
    rho2: &DensityField,
    kernels: KernelSet<'_>,
    beta: f64,
    weight: f64,
) -> Result<Velocities> {
    check_inputs(rho1, rho2, kernels)?;
    let grid = rho1.grid();
    let dim = grid.dimension();
    let tstrides = &kernels.w1.strides;
    let cells = grid.cells();

    let table_pos = |linear: usize| -> usize {
        grid.multi_index(linear)
            .iter()
            .zip(tstrides)
            .map(|(&j, &s)| j * s)
            .sum()
    };
    // Index of offset J - L is base(J) - pos(L).
    let base_shift: usize = cells.iter().zip(tstrides).map(|(&n, &s)| (n - 1) * s).sum();

    let sources: Vec<(usize, f64, f64)> = rho1
        .values()
        .iter()
        .zip(rho2.values())
        .enumerate()
        .filter(|(_, (&r1, &r2))| r1 != 0.0 || r2 != 0.0)
        .map(|(l, (&r1, &r2))| (table_pos(l), r1, r2))
        .collect();

    let w1: Vec<&[f64]> = (0..dim).map(|a| kernels.w1.component(a)).collect();
    let w2: Vec<&[f64]> = (0..dim).map(|a| kernels.w2.component(a)).collect();
    let kk: Vec<&[f64]> = (0..dim).map(|a| kernels.k.component(a)).collect();

    let per_cell: Vec<[[f64; 2]; 2]> = (0..grid.cell_count())
        .into_par_iter()
        .map(|j| {
            let base = table_pos(j) + base_shift;
            let mut s1 = [0.0; 2];
            let mut s2 = [0.0; 2];
            for &(pos, r1, r2) in &sources {
                let k = base - pos;
                for axis in 0..dim {
                    let dk = kk[axis][k];
                    s1[axis] += r1 * w1[axis][k] + r2 * dk;
                    s2[axis] += r2 * w2[axis][k] - beta * r1 * dk;
                }
            }
            let mut out = [[0.0; 2]; 2];
            for axis in 0..dim {
                out[0][axis] = -(s1[axis] * weight);
                out[1][axis] = -(s2[axis] * weight);
            }
            out
        })
        .collect();

    Ok(scatter(&per_cell, dim))
}

fn scatter(per_cell: &[[[f64; 2]; 2]], dim: usize) -> Velocities {
    let split = |species: usize| {
        VelocityField::from_components(
            (0..dim)
                .map(|axis| per_cell.iter().map(|c| c[species][axis]).collect())
                .collect(),
        )
    };
    Velocities {
        species1: split(0),
        species2: split(1),
    }
}

/// FFT evaluation with freshly built spectra. Prefer [`SpectralKernels`] when
/// evaluating repeatedly on one grid.
pub fn compute_velocities_fast(
    rho1: &DensityField,
    rho2: &DensityField,
    kernels: KernelSet<'_>,
    beta: f64,
    weight: f64,
) -> Result<Velocities> {
    check_inputs(rho1, rho2, kernels)?;
    SpectralKernels::new(rho1.grid(), kernels).velocities(rho1, rho2, beta, weight)
}

/// Kernel spectra on the padded grid of size `2 N_i` per axis, large enough
/// for the linear convolution not to wrap around.
pub struct SpectralKernels {
    cells: Vec<usize>,
    padded: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    w1: Vec<Vec<Complex64>>,
    w2: Vec<Vec<Complex64>>,
    k: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for SpectralKernels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralKernels")
            .field("cells", &self.cells)
            .field("padded", &self.padded)
            .finish_non_exhaustive()
    }
}

impl SpectralKernels {
    pub fn new(grid: &Grid, kernels: KernelSet<'_>) -> Self {
        let cells = grid.cells().to_vec();
        let padded: Vec<usize> = cells.iter().map(|&n| 2 * n).collect();
        let mut planner = FftPlanner::new();
        let forward = padded
            .iter()
            .map(|&p| planner.plan_fft_forward(p))
            .collect();
        let inverse = padded
            .iter()
            .map(|&p| planner.plan_fft_inverse(p))
            .collect();
        let mut this = Self {
            cells,
            padded,
            forward,
            inverse,
            w1: Vec::new(),
            w2: Vec::new(),
            k: Vec::new(),
        };
        this.w1 = this.kernel_spectra(kernels.w1);
        this.w2 = this.kernel_spectra(kernels.w2);
        this.k = this.kernel_spectra(kernels.k);
        this
    }

    fn kernel_spectra(&self, table: &KernelTable) -> Vec<Vec<Complex64>> {
        let total: usize = self.padded.iter().product();
        (0..table.dimension())
            .map(|axis| {
                let mut buf = vec![Complex64::new(0.0, 0.0); total];
                let comp = table.component(axis);
                for (flat, &v) in comp.iter().enumerate() {
                    let mut rest = flat;
                    let mut pos = 0;
                    let mut stride = 1;
                    for d in 0..self.cells.len() {
                        let shape = 2 * self.cells[d] - 1;
                        let o = (rest % shape) as isize - (self.cells[d] as isize - 1);
                        rest /= shape;
                        let p = self.padded[d] as isize;
                        pos += (o.rem_euclid(p)) as usize * stride;
                        stride *= self.padded[d];
                    }
                    buf[pos] = Complex64::new(v, 0.0);
                }
                self.transform(&mut buf, false);
                buf
            })
            .collect()
    }

    fn pad(&self, field: &DensityField) -> Vec<Complex64> {
        let total: usize = self.padded.iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        let grid = field.grid();
        for (l, &v) in field.values().iter().enumerate() {
            if v != 0.0 {
                let mut pos = 0;
                let mut stride = 1;
                for (d, j) in grid.multi_index(l).into_iter().enumerate() {
                    pos += j * stride;
                    stride *= self.padded[d];
                }
                buf[pos] = Complex64::new(v, 0.0);
            }
        }
        buf
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let mut stride = 1;
        let mut line = Vec::new();
        for (axis, &n) in self.padded.iter().enumerate() {
            let plan = if inverse {
                &self.inverse[axis]
            } else {
                &self.forward[axis]
            };
            if stride == 1 {
                plan.process(data);
            } else {
                let block = stride * n;
                line.resize(n, Complex64::new(0.0, 0.0));
                for chunk in data.chunks_mut(block) {
                    for offset in 0..stride {
                        for (k, slot) in line.iter_mut().enumerate() {
                            *slot = chunk[offset + k * stride];
                        }
                        plan.process(&mut line);
                        for (k, v) in line.iter().enumerate() {
                            chunk[offset + k * stride] = *v;
                        }
                    }
                }
            }
            stride *= n;
        }
    }

    pub fn velocities(
        &self,
        rho1: &DensityField,
        rho2: &DensityField,
        beta: f64,
        weight: f64,
    ) -> Result<Velocities> {
        let grid = rho1.grid();
        if grid.cells() != self.cells || rho2.grid() != grid {
            return Err(Error::Contract(
                "spectral kernels were built for a different grid".into(),
            ));
        }
        let mut f1 = self.pad(rho1);
        self.transform(&mut f1, false);
        let mut f2 = self.pad(rho2);
        self.transform(&mut f2, false);
        let total: usize = self.padded.iter().product();
        let scale = weight / total as f64;
        let dim = self.cells.len();

        let extract = |buf: &[Complex64]| -> Vec<f64> {
            (0..grid.cell_count())
                .map(|l| {
                    let mut pos = 0;
                    let mut stride = 1;
                    for (d, j) in grid.multi_index(l).into_iter().enumerate() {
                        pos += j * stride;
                        stride *= self.padded[d];
                    }
                    -(buf[pos].re * scale)
                })
                .collect()
        };

        let mut a1 = Vec::with_capacity(dim);
        let mut a2 = Vec::with_capacity(dim);
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..dim {
            for (p, slot) in buf.iter_mut().enumerate() {
                *slot = f1[p] * self.w1[axis][p] + f2[p] * self.k[axis][p];
            }
            self.transform(&mut buf, true);
            a1.push(extract(&buf));

            for (p, slot) in buf.iter_mut().enumerate() {
                *slot = f2[p] * self.w2[axis][p] - f1[p] * self.k[axis][p] * beta;
            }
            self.transform(&mut buf, true);
            a2.push(extract(&buf));
        }
        Ok(Velocities {
            species1: VelocityField::from_components(a1),
            species2: VelocityField::from_components(a2),
        })
    }
}

/// How the convolution sum is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Multiply by the cell volume: densities are cell averages.
    #[default]
    Volume,
    /// Unit weight: densities are masses per cell.
    Unit,
}

/// Certified Lipschitz bounds of the three potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub omega1: f64,
    pub omega2: f64,
    pub kappa: f64,
}

impl LipschitzBounds {
    /// Per-species bound on every velocity component, given the weighted
    /// masses `Σ ρ w` of both species.
    pub fn speed_bounds(&self, mass1: f64, mass2: f64, beta: f64) -> (f64, f64) {
        (
            self.omega1 * mass1 + self.kappa * mass2,
            self.omega2 * mass2 + beta * self.kappa * mass1,
        )
    }
}

/// Potentials, their tables on one grid, and the evaluation settings.
#[derive(Debug)]
pub struct InteractionModel {
    grid: Grid,
    pub w1: Potential,
    pub w2: Potential,
    pub k: Potential,
    bounds: LipschitzBounds,
    tables: [KernelTable; 3],
    spectral: Option<SpectralKernels>,
    path: VelocityPath,
    weighting: Weighting,
}

impl InteractionModel {
    pub fn new(
        grid: &Grid,
        w1: Potential,
        w2: Potential,
        k: Potential,
        path: VelocityPath,
        weighting: Weighting,
    ) -> Result<Self> {
        let bounds = LipschitzBounds {
            omega1: w1.certify_lipschitz_bound()?,
            omega2: w2.certify_lipschitz_bound()?,
            kappa: k.certify_lipschitz_bound()?,
        };
        let tables = [
            KernelTable::build(grid, &w1)?,
            KernelTable::build(grid, &w2)?,
            KernelTable::build(grid, &k)?,
        ];
        let mut model = Self {
            grid: grid.clone(),
            w1,
            w2,
            k,
            bounds,
            tables,
            spectral: None,
            path,
            weighting,
        };
        if path != VelocityPath::Direct {
            model.spectral = Some(SpectralKernels::new(grid, model.kernels()));
        }
        Ok(model)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bounds(&self) -> LipschitzBounds {
        self.bounds
    }

    pub fn path(&self) -> VelocityPath {
        self.path
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn kernels(&self) -> KernelSet<'_> {
        KernelSet {
            w1: &self.tables[0],
            w2: &self.tables[1],
            k: &self.tables[2],
        }
    }

    /// Quadrature weight applied to the convolution sums.
    pub fn weight(&self) -> f64 {
        match self.weighting {
            Weighting::Volume => self.grid.cell_volume(),
            Weighting::Unit => 1.0,
        }
    }

    /// Weighted masses `Σ ρ w` of a state, the masses entering the speed bound.
    pub fn weighted_masses(&self, state: &SimState) -> (f64, f64) {
        let w = self.weight();
        (state.rho1.sum() * w, state.rho2.sum() * w)
    }

    /// Bounds on every velocity component of `state`.
    pub fn speed_bounds(&self, state: &SimState) -> (f64, f64) {
        let (m1, m2) = self.weighted_masses(state);
        self.bounds.speed_bounds(m1, m2, state.beta)
    }

    /// CFL budget `cfl_max_dt` for the certified bounds, shrunk by the largest
    /// weighted mass when it exceeds one so that the budget stays sound for
    /// data that are not probability measures.
    pub fn max_stable_dt(&self, state: &SimState) -> f64 {
        let (m1, m2) = self.weighted_masses(state);
        let b = self.bounds;
        cfl_max_dt(&self.grid, b.omega1, b.omega2, b.kappa) / m1.max(m2).max(1.0)
    }

    pub fn velocities(&self, state: &SimState) -> Result<Velocities> {
        self.velocities_of(&state.rho1, &state.rho2, state.beta)
    }

    pub fn velocities_of(
        &self,
        rho1: &DensityField,
        rho2: &DensityField,
        beta: f64,
    ) -> Result<Velocities> {
        if rho1.grid() != &self.grid {
            return Err(Error::Contract(
                "state grid differs from the model grid".into(),
            ));
        }
        let w = self.weight();
        match self.path {
            VelocityPath::Direct => compute_velocities_direct(rho1, rho2, self.kernels(), beta, w),
            VelocityPath::Fast => self.spectral().velocities(rho1, rho2, beta, w),
            VelocityPath::Both => {
                let direct = compute_velocities_direct(rho1, rho2, self.kernels(), beta, w)?;
                let fast = self.spectral().velocities(rho1, rho2, beta, w)?;
                let diff = direct.max_abs_diff(&fast);
                if diff > PATH_AGREEMENT_TOL {
                    return Err(Error::Contract(format!(
                        "direct and fast velocities differ by {diff:e}"
                    )));
                }
                Ok(direct)
            }
        }
    }

    fn spectral(&self) -> &SpectralKernels {
        self.spectral
            .as_ref()
            .expect("spectral kernels are built for non-direct paths")
    }
}
