//! Truncated Cartesian grid.
//!
//! Cells are indexed by a multi-index `J` with `0 <= J_i < N_i`; the flat
//! storage order runs fastest along axis 0. Cell `J` covers the half-open box
//! `[origin + J Δx, origin + (J + 1) Δx)` and its center sits at
//! `origin + (J + 1/2) Δx`.

use crate::error::{Error, Result};

/// Uniform Cartesian mesh in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    origin: Vec<f64>,
    cells: Vec<usize>,
    steps: Vec<f64>,
}

impl Grid {
    pub fn new(origin: Vec<f64>, cells: Vec<usize>, steps: Vec<f64>) -> Result<Self> {
        let dim = origin.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if cells.len() != dim || steps.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "origin, cells and steps must all have length {dim}"
            )));
        }
        if cells.contains(&0) {
            return Err(Error::InvalidGrid(
                "every axis needs at least one cell".into(),
            ));
        }
        if steps.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "steps must be positive, got {steps:?}"
            )));
        }
        if origin.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        Ok(Self {
            origin,
            cells,
            steps,
        })
    }

    /// Grid covering the box `[lo, lo + extent)` with `cells` cells per axis.
    pub fn from_extent(origin: Vec<f64>, extent: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if extent.len() != cells.len() {
            return Err(Error::InvalidGrid(
                "extent and cells differ in length".into(),
            ));
        }
        let steps = extent
            .iter()
            .zip(&cells)
            .map(|(&e, &n)| e / n.max(1) as f64)
            .collect();
        Self::new(origin, cells, steps)
    }

    /// One-dimensional grid, mostly for tests and 1D scenarios.
    pub fn line(origin: f64, step: f64, cells: usize) -> Result<Self> {
        Self::new(vec![origin], vec![cells], vec![step])
    }

    pub fn dimension(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    /// `Δx = max_i Δx_i`.
    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    /// Measure of a single cell, `∏ Δx_i`.
    pub fn cell_volume(&self) -> f64 {
        self.steps.iter().product()
    }

    /// Measure of the whole box, `∏ N_i Δx_i`.
    pub fn domain_measure(&self) -> f64 {
        self.cells
            .iter()
            .zip(&self.steps)
            .map(|(&n, &h)| n as f64 * h)
            .product()
    }

    /// Flat-storage stride of each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = Vec::with_capacity(self.dimension());
        let mut s = 1;
        for &n in &self.cells {
            strides.push(s);
            s *= n;
        }
        strides
    }

    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        self.check_index(index)?;
        Ok(index.iter().zip(self.strides()).map(|(&j, s)| j * s).sum())
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        debug_assert!(linear < self.cell_count());
        self.cells
            .iter()
            .map(|&n| {
                let j = linear % n;
                linear /= n;
                j
            })
            .collect()
    }

    pub fn cell_center(&self, index: &[usize]) -> Result<Vec<f64>> {
        self.check_index(index)?;
        Ok(index
            .iter()
            .enumerate()
            .map(|(axis, &j)| self.axis_center(axis, j))
            .collect())
    }

    /// Coordinate of the center of cell `j` along `axis`.
    #[inline]
    pub fn axis_center(&self, axis: usize, j: usize) -> f64 {
        self.origin[axis] + (j as f64 + 0.5) * self.steps[axis]
    }

    /// Center of the cell with flat index `linear`.
    pub fn center_of(&self, linear: usize) -> Vec<f64> {
        self.multi_index(linear)
            .into_iter()
            .enumerate()
            .map(|(axis, j)| self.axis_center(axis, j))
            .collect()
    }

    /// Cell whose half-open box contains `x`, or `None` outside the domain.
    pub fn containing_cell(&self, x: &[f64]) -> Option<Vec<usize>> {
        if x.len() != self.dimension() {
            return None;
        }
        let mut index = Vec::with_capacity(x.len());
        for axis in 0..self.dimension() {
            let t = (x[axis] - self.origin[axis]) / self.steps[axis];
            if !t.is_finite() || t < 0.0 {
                return None;
            }
            let mut j = t.floor() as usize;
            // Faces are placed at `origin + j Δx`; correct `t` rounding across one.
            if j > 0 && x[axis] < self.origin[axis] + j as f64 * self.steps[axis] {
                j -= 1;
            } else if x[axis] >= self.origin[axis] + (j + 1) as f64 * self.steps[axis] {
                j += 1;
            }
            if j >= self.cells[axis] {
                return None;
            }
            index.push(j);
        }
        Some(index)
    }

    /// Same box refined by an integer factor along every axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.origin.clone(),
            self.cells.iter().map(|&n| n * factor).collect(),
            self.steps.iter().map(|&h| h / factor as f64).collect(),
        )
    }

    fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.dimension() || index.iter().zip(&self.cells).any(|(&j, &n)| j >= n) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                cells: self.cells.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_use_cell_centered_convention() {
        let g = Grid::line(0.0, 1.0, 4).unwrap();
        assert_eq!(g.cell_center(&[0]).unwrap(), vec![0.5]);

        let g = Grid::line(-1.0, 0.5, 4).unwrap();
        assert_eq!(g.cell_center(&[2]).unwrap(), vec![0.25]);

        let g = Grid::new(vec![0.0, 0.0], vec![3, 3], vec![1.0, 2.0]).unwrap();
        assert_eq!(g.cell_center(&[1, 1]).unwrap(), vec![1.5, 3.0]);
    }

    #[test]
    fn center_out_of_range_is_an_error() {
        let g = Grid::line(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            g.cell_center(&[4]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(g.cell_center(&[0, 0]).is_err());
    }

    #[test]
    fn volumes() {
        assert_eq!(Grid::line(0.0, 0.5, 3).unwrap().cell_volume(), 0.5);
        let g = Grid::new(vec![0.0, 0.0], vec![2, 2], vec![0.1, 0.1]).unwrap();
        assert!((g.cell_volume() - 0.01).abs() < 1e-17);
        let g = Grid::new(vec![0.0, 0.0], vec![2, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(g.cell_volume(), 2.0);
    }

    #[test]
    fn containing_cell_is_half_open() {
        let g = Grid::line(0.0, 1.0, 4).unwrap();
        assert_eq!(g.containing_cell(&[2.3]), Some(vec![2]));
        assert_eq!(g.containing_cell(&[2.0]), Some(vec![2]));
        assert_eq!(g.containing_cell(&[-0.1]), None);
        assert_eq!(g.containing_cell(&[4.0]), None);
        assert_eq!(g.containing_cell(&[0.0]), Some(vec![0]));
    }

    #[test]
    fn faces_resolve_consistently_for_inexact_steps() {
        let g = Grid::from_extent(vec![-0.5, -0.5], vec![1.0, 1.0], vec![50, 50]).unwrap();
        assert_eq!(g.containing_cell(&[0.0, 0.0]), Some(vec![25, 25]));
        let g = Grid::line(-1.0, 0.1, 20).unwrap();
        for j in 0..20 {
            let face = -1.0 + j as f64 * 0.1;
            let cell = g.containing_cell(&[face]).unwrap()[0];
            assert!(face >= -1.0 + cell as f64 * 0.1);
            assert!(face < -1.0 + (cell + 1) as f64 * 0.1);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::line(0.0, 0.0, 3).is_err());
        assert!(Grid::line(0.0, 1.0, 0).is_err());
        assert!(Grid::new(vec![0.0; 3], vec![1; 3], vec![1.0; 3]).is_err());
    }

    #[test]
    fn linear_and_multi_index_agree() {
        let g = Grid::new(vec![0.0, 0.0], vec![3, 5], vec![1.0, 1.0]).unwrap();
        for l in 0..g.cell_count() {
            assert_eq!(g.linear_index(&g.multi_index(l)).unwrap(), l);
        }
        assert_eq!(g.linear_index(&[2, 1]).unwrap(), 5);
    }

    #[test]
    fn total_volume_matches_domain_measure() {
        let g = Grid::new(vec![-0.3, 0.7], vec![37, 23], vec![0.013, 0.041]).unwrap();
        let total: f64 = (0..g.cell_count()).map(|_| g.cell_volume()).sum();
        assert!((total - g.domain_measure()).abs() <= 1e-14 * g.domain_measure());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn center_of_containing_cell_is_within_half_a_step(
                x in -2.0f64..3.0, y in -1.0f64..1.5,
                nx in 1usize..40, ny in 1usize..40,
                hx in 0.01f64..0.2, hy in 0.01f64..0.2,
            ) {
                let g = Grid::new(vec![-1.0, -0.5], vec![nx, ny], vec![hx, hy]).unwrap();
                if let Some(j) = g.containing_cell(&[x, y]) {
                    let c = g.cell_center(&j).unwrap();
                    prop_assert!((c[0] - x).abs() <= 0.5 * hx * (1.0 + 1e-12));
                    prop_assert!((c[1] - y).abs() <= 0.5 * hy * (1.0 + 1e-12));
                }
            }
        }
    }
}
