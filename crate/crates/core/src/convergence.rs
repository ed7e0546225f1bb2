//! Grid-refinement studies.
//!
//! A scenario is re-run on grids refined by a factor of two per level, with
//! the time step scaled so that the CFL number stays fixed, and the final
//! states of successive levels are compared. In 1D the comparison is the
//! Wasserstein-1 distance between the atomic measures `Σ ρ_J m(C_J) δ_{x_J}`;
//! in 2D it is a proxy built from moments.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scheme::{compensated_sum, DensityField, DtPolicy, SimState};
use crate::sim::config::SimConfig;
use crate::sim::driver::simulate;

/// Wasserstein-1 distance between two 1D fields after normalizing each to
/// unit mass, computed as `∫ |F_μ - F_ν| dx` over the merged atom positions.
pub fn wasserstein1_1d(mu: &DensityField, nu: &DensityField) -> Result<f64> {
    let atoms = |f: &DensityField| -> Result<Vec<(f64, f64)>> {
        let g = f.grid();
        if g.dimension() != 1 {
            return Err(Error::Contract(
                "wasserstein1_1d needs one-dimensional fields".into(),
            ));
        }
        let mass = f.mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        let vol = g.cell_volume();
        Ok(f.values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (g.axis_center(0, j), v * vol / mass))
            .collect())
    };
    Ok(wasserstein1_atoms(&atoms(mu)?, &atoms(nu)?))
}

/// `W1` between two probability measures given as `(position, weight)` atoms,
/// each sorted by position.
pub fn wasserstein1_atoms(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> f64 {
    let (mut i, mut k) = (0, 0);
    let (mut cdf_mu, mut cdf_nu) = (0.0f64, 0.0f64);
    let mut last: Option<f64> = None;
    let mut terms = Vec::with_capacity(mu.len() + nu.len());
    while i < mu.len() || k < nu.len() {
        let x = match (mu.get(i), nu.get(k)) {
            (Some(a), Some(b)) => a.0.min(b.0),
            (Some(a), None) => a.0,
            (None, Some(b)) => b.0,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            terms.push((cdf_mu - cdf_nu).abs() * (x - prev));
        }
        while i < mu.len() && mu[i].0 == x {
            cdf_mu += mu[i].1;
            i += 1;
        }
        while k < nu.len() && nu[k].0 == x {
            cdf_nu += nu[k].1;
            k += 1;
        }
        last = Some(x);
    }
    compensated_sum(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Exact Wasserstein-1 distance (1D only).
    Wasserstein1,
    /// `|Δ mass| + |Δ center| + |Δ spread|` per species, with the spread the
    /// root mean square distance to the species' own center (2D).
    MomentProxy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    /// Level of the coarser grid of the compared pair.
    pub level: usize,
    pub cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub species: u8,
    /// Distance between this level and the next finer one.
    pub distance: f64,
    /// `log2` of the ratio to the previous row's distance.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub metric: Metric,
    pub t_final: f64,
    pub rows: Vec<RefinementRow>,
}

impl RefinementReport {
    pub fn distances(&self, species: u8) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.species == species)
            .map(|r| r.distance)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,cells,dx,dt,species,distance,observed_order\n");
        for r in &self.rows {
            let order = r.observed_order.map(|o| o.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.level, r.cells, r.dx, r.dt, r.species, r.distance, order
            );
        }
        out
    }
}

/// Final state of `config` at a given refinement level.
pub struct LevelResult {
    pub level: usize,
    pub dt: f64,
    pub state: SimState,
}

pub fn refine_config(base: &SimConfig, level: usize) -> Result<SimConfig> {
    let factor = 1usize << level;
    let mut config = base.clone();
    config.grid = base.grid.refined(factor)?;
    if let DtPolicy::Fixed(dt) = base.dt_policy {
        config.dt_policy = DtPolicy::Fixed(dt / factor as f64);
    }
    Ok(config)
}

pub fn run_levels(base: &SimConfig, levels: usize) -> Result<Vec<LevelResult>> {
    (0..levels)
        .into_par_iter()
        .map(|level| {
            let config = refine_config(base, level)?;
            let outcome = simulate(&config)?;
            Ok(LevelResult {
                level,
                dt: outcome.dt,
                state: outcome.state,
            })
        })
        .collect()
}

pub fn refinement_study(base: &SimConfig, levels: usize) -> Result<RefinementReport> {
    if levels < 2 {
        return Err(Error::Contract(format!(
            "a refinement study needs at least 2 levels, got {levels}"
        )));
    }
    let results = run_levels(base, levels)?;
    let metric = if base.grid.dimension() == 1 {
        Metric::Wasserstein1
    } else {
        Metric::MomentProxy
    };
    let mut rows = Vec::new();
    for species in [1u8, 2] {
        let field = |r: &LevelResult| {
            if species == 1 {
                r.state.rho1.clone()
            } else {
                r.state.rho2.clone()
            }
        };
        if results.iter().all(|r| !(field(r).mass() > 0.0)) {
            continue;
        }
        let mut prev: Option<f64> = None;
        for pair in results.windows(2) {
            let (coarse, fine) = (field(&pair[0]), field(&pair[1]));
            let distance = match metric {
                Metric::Wasserstein1 => wasserstein1_1d(&coarse, &fine)?,
                Metric::MomentProxy => moment_proxy(&coarse, &fine),
            };
            rows.push(RefinementRow {
                level: pair[0].level,
                cells: coarse.grid().cells()[0],
                dx: coarse.grid().max_step(),
                dt: pair[0].dt,
                species,
                distance,
                observed_order: prev.map(|p| (p / distance).log2()),
            });
            prev = Some(distance);
        }
    }
    Ok(RefinementReport {
        metric,
        t_final: base.t_final,
        rows,
    })
}

/// `(mass, center, rms spread)` of a field.
pub fn moments(field: &DensityField) -> (f64, Vec<f64>, f64) {
    let g = field.grid();
    let vol = g.cell_volume();
    let mass = field.mass();
    let centers: Vec<Vec<f64>> = (0..g.cell_count()).map(|l| g.center_of(l)).collect();
    let v = field.values();
    let center: Vec<f64> = (0..g.dimension())
        .map(|a| compensated_sum((0..v.len()).map(|l| centers[l][a] * v[l] * vol)) / mass)
        .collect();
    let second = compensated_sum((0..v.len()).map(|l| {
        centers[l]
            .iter()
            .zip(&center)
            .map(|(x, c)| (x - c).powi(2))
            .sum::<f64>()
            * v[l]
            * vol
    }));
    (mass, center, (second / mass).max(0.0).sqrt())
}

fn moment_proxy(a: &DensityField, b: &DensityField) -> f64 {
    let (ma, ca, sa) = moments(a);
    let (mb, cb, sb) = moments(b);
    let dc = ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    (ma - mb).abs() + dc + (sa - sb).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    fn line_field(origin: f64, step: f64, values: Vec<f64>) -> DensityField {
        let g = Grid::line(origin, step, values.len()).unwrap();
        DensityField::from_values(&g, values).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let f = line_field(0.0, 0.1, vec![0.0, 1.0, 3.0, 2.0]);
        assert_eq!(wasserstein1_1d(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn translated_diracs() {
        let a = line_field(0.0, 1.0, vec![1.0, 0.0, 0.0, 0.0]);
        let b = line_field(0.0, 1.0, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(wasserstein1_1d(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn split_mass_against_midpoint() {
        // μ = ½δ0 + ½δ1 on cells centered at 0 and 1, ν = δ_{1/2}. The only
        // transport plan moves each half a distance 1/2: cost 1/2.
        let mu = line_field(-0.5, 1.0, vec![1.0, 1.0]);
        let nu = line_field(0.0, 1.0, vec![1.0]);
        assert!((wasserstein1_1d(&mu, &nu).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_is_an_error() {
        let z = line_field(0.0, 1.0, vec![0.0, 0.0]);
        let f = line_field(0.0, 1.0, vec![0.0, 1.0]);
        assert!(matches!(wasserstein1_1d(&z, &f), Err(Error::ZeroMass)));
    }

    /// Brute-force `W1` via the quantile coupling: both quantile functions
    /// sampled on a fine uniform grid of levels in `(0, 1)`.
    fn quantile_oracle(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> f64 {
        let q = |atoms: &[(f64, f64)], u: f64| {
            let mut c = 0.0;
            for &(x, w) in atoms {
                c += w;
                if u <= c {
                    return x;
                }
            }
            atoms.last().unwrap().0
        };
        let n = 200_000;
        (0..n)
            .map(|k| {
                let u = (k as f64 + 0.5) / n as f64;
                (q(mu, u) - q(nu, u)).abs()
            })
            .sum::<f64>()
            / n as f64
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = DensityField> {
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 2..24)
                .prop_filter("needs mass", |v| v.iter().any(|&x| x > 0.0))
                .prop_flat_map(|v| {
                    (-1.0f64..1.0, 0.01f64..0.2).prop_map(move |(o, h)| line_field(o, h, v.clone()))
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn is_a_metric(a in field(), b in field(), c in field()) {
                let ab = wasserstein1_1d(&a, &b).unwrap();
                let ba = wasserstein1_1d(&b, &a).unwrap();
                let bc = wasserstein1_1d(&b, &c).unwrap();
                let ac = wasserstein1_1d(&a, &c).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-14);
                prop_assert!(ac <= ab + bc + 1e-12);
                prop_assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
            }

            #[test]
            fn matches_quantile_coupling(a in field(), b in field()) {
                let atoms = |f: &DensityField| -> Vec<(f64, f64)> {
                    let g = f.grid();
                    let m = f.mass();
                    f.values().iter().enumerate().filter(|(_, &v)| v > 0.0)
                        .map(|(j, &v)| (g.axis_center(0, j), v * g.cell_volume() / m)).collect()
                };
                let oracle = quantile_oracle(&atoms(&a), &atoms(&b));
                let w = wasserstein1_1d(&a, &b).unwrap();
                // Quantile sampling error is bounded by the span over the sample count.
                prop_assert!((w - oracle).abs() <= 1e-4, "{} vs {}", w, oracle);
            }
        }
    }
}
