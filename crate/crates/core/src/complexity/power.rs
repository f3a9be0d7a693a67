use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IfsError, Result};
use crate::rng::Xoshiro256PlusPlus;

/// Stopping rule for [`spectral_norm_power_iter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerIterConfig {
    /// Relative change of `||A v||` between iterations that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100, seed: 0 }
    }
}

impl PowerIterConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(IfsError::InvalidArgument("power iteration needs tol > 0 and max_iters >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterResult {
    /// Estimate of the largest |eigenvalue|.
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration for the spectral norm of a symmetric operator given only
/// through its action `v -> A v`.
///
/// Starts from a seeded Gaussian unit vector, repeatedly normalizes `A v`, and
/// stops at the first iteration whose norm changes by less than `tol`
/// (relative). Hitting `max_iters` returns the last estimate with
/// `converged = false`; that happens when the two largest |eigenvalues| are
/// too close for the iteration budget.
pub fn spectral_norm_power_iter<F>(mut apply: F, dim: usize, config: &PowerIterConfig) -> Result<PowerIterResult>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    config.validate()?;
    if dim == 0 {
        return Err(IfsError::InvalidArgument("operator dimension must be >= 1".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let mut v = DVector::from_vec(rng.normal_vec(dim));
    let n0 = v.norm();
    v /= n0;

    let mut prev = f64::NAN;
    for it in 1..=config.max_iters {
        let av = apply(&v);
        let norm = av.norm();
        if !norm.is_finite() {
            return Err(IfsError::NonFiniteState { step: it });
        }
        if norm < 1e-300 {
            return Err(IfsError::ZeroOperator);
        }
        if it > 1 && (norm - prev).abs() <= config.tol * norm {
            return Ok(PowerIterResult { norm, converged: true, iterations: it });
        }
        prev = norm;
        v = av / norm;
    }
    Ok(PowerIterResult { norm: prev, converged: false, iterations: config.max_iters })
}

/// Operator norm of an arbitrary square matrix, via power iteration on `M^T M`.
pub fn matrix_operator_norm(m: &DMatrix<f64>, config: &PowerIterConfig) -> Result<PowerIterResult> {
    if m.nrows() == 1 && m.ncols() == 1 {
        return Ok(PowerIterResult { norm: m[(0, 0)].abs(), converged: true, iterations: 0 });
    }
    let mt = m.transpose();
    match spectral_norm_power_iter(|v| &mt * (m * v), m.ncols(), config) {
        Ok(r) => Ok(PowerIterResult { norm: r.norm.sqrt(), ..r }),
        Err(IfsError::ZeroOperator) => Ok(PowerIterResult { norm: 0.0, converged: true, iterations: 1 }),
        Err(e) => Err(e),
    }
}

/// Config for norms that feed exact-value checks (analytic Lipschitz constants).
pub(crate) fn tight_config() -> PowerIterConfig {
    PowerIterConfig { tol: 1e-13, max_iters: 100_000, seed: 0x5eed }
}
