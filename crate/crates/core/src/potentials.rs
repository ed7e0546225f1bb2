//! Pointy interaction potentials.
//!
//! Every potential here is radial, Lipschitz, symmetric, vanishes at the
//! origin and is `C^1` away from it. Only the gradient enters the scheme, and
//! it is always taken in its *hatted* form: the true gradient off the origin
//! and exactly zero at the origin, so that a cell exerts no force on itself.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of radii sampled when certifying a Lipschitz bound.
pub const CERTIFY_SAMPLES: usize = 10_000;
/// Largest radius sampled when certifying a Lipschitz bound.
pub const CERTIFY_MAX_RADIUS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `W ≡ 0`.
    Zero,
    /// `c |x|`.
    Newtonian,
    /// `c (1 - e^{-|x|})`.
    Exponential,
    /// `c (1 - (|x| + 1) e^{-|x|})`.
    FlyAndRegroup,
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PotentialKind::Zero => "zero",
            PotentialKind::Newtonian => "newtonian",
            PotentialKind::Exponential => "exponential",
            PotentialKind::FlyAndRegroup => "fly_and_regroup",
        })
    }
}

/// A closed-form radial potential `c · φ(|x|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Potential {
    pub fn new(kind: PotentialKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Contract(format!(
                "potential scale must be finite and nonnegative, got {scale}"
            )));
        }
        Ok(Self { kind, scale })
    }

    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            scale: 0.0,
        }
    }

    pub fn newtonian(scale: f64) -> Self {
        Self {
            kind: PotentialKind::Newtonian,
            scale,
        }
    }

    pub fn exponential(scale: f64) -> Self {
        Self {
            kind: PotentialKind::Exponential,
            scale,
        }
    }

    pub fn fly_and_regroup(scale: f64) -> Self {
        Self {
            kind: PotentialKind::FlyAndRegroup,
            scale,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        let c = self.scale;
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Newtonian => c * r,
            PotentialKind::Exponential => -c * (-r).exp_m1(),
            PotentialKind::FlyAndRegroup => c * (1.0 - (r + 1.0) * (-r).exp()),
        }
    }

    /// Hatted gradient, written into `out`.
    pub fn grad_hat_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), out.len());
        let r = norm(x);
        if r == 0.0 || self.kind == PotentialKind::Zero {
            out.fill(0.0);
            return;
        }
        let c = self.scale;
        match self.kind {
            PotentialKind::Zero => unreachable!(),
            PotentialKind::Newtonian => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = c * (xi / r);
                }
            }
            PotentialKind::Exponential => {
                let g = c * (-r).exp();
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = g * (xi / r);
                }
            }
            // d/dr [1 - (r + 1) e^{-r}] = r e^{-r}, so the radial unit vector cancels.
            PotentialKind::FlyAndRegroup => {
                let g = c * (-r).exp();
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = g * xi;
                }
            }
        }
    }

    pub fn grad_hat(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.grad_hat_into(x, &mut out);
        out
    }

    /// Analytic supremum of `|grad_hat|` over the whole space.
    pub fn lipschitz_bound(&self) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Newtonian | PotentialKind::Exponential => self.scale,
            // max_r r e^{-r} is attained at r = 1.
            PotentialKind::FlyAndRegroup => self.scale * (-1.0f64).exp(),
        }
    }

    /// Returns [`lipschitz_bound`](Self::lipschitz_bound) after checking that
    /// no sampled radius in `(0, 50]` exceeds it.
    pub fn certify_lipschitz_bound(&self) -> Result<f64> {
        let bound = self.lipschitz_bound();
        for k in 1..=CERTIFY_SAMPLES {
            let radius = CERTIFY_MAX_RADIUS * k as f64 / CERTIFY_SAMPLES as f64;
            let sample = self.radial_derivative(radius).abs();
            if sample > bound {
                return Err(Error::InternalConsistency {
                    bound,
                    sample,
                    radius,
                });
            }
        }
        Ok(bound)
    }

    /// `λ` such that `W - λ/2 |x|^2` is convex. Informational only.
    pub fn lambda_convexity(&self) -> f64 {
        match self.kind {
            PotentialKind::Zero | PotentialKind::Newtonian => 0.0,
            PotentialKind::Exponential | PotentialKind::FlyAndRegroup => -self.scale,
        }
    }

    fn radial_derivative(&self, r: f64) -> f64 {
        let mut g = [0.0];
        self.grad_hat_into(&[r], &mut g);
        g[0]
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.scale)
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    match x {
        [a] => a.abs(),
        [a, b] => a.hypot(*b),
        _ => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}
