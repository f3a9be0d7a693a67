//! Jacobian spectral norms, the Monte-Carlo complexity statistic `R`, and
//! the generalization bound evaluators.

pub(crate) mod power;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimension::RamsBound;
use crate::error::{IfsError, Result};
use crate::ifs::{IfsSystem, SampleCloud};
use crate::linalg::{pairwise_sum, symmetric_spectral_norm};
use crate::problems::{BatchScheme, Dataset, Problem};
use crate::rng::{child_seed, cumulative, Xoshiro256PlusPlus};

pub use power::{matrix_operator_norm, spectral_norm_power_iter, PowerIterConfig, PowerIterResult};

/// Largest parameter dimension [`dense_jacobian_oracle`] will assemble.
pub const DENSE_ORACLE_MAX_DIM: usize = 64;

/// Assembles `J = I - eta * hess R_batch(w)` column by column from
/// Hessian-vector products and returns it with its exact spectral norm.
pub fn dense_jacobian_oracle(
    problem: &Problem,
    w: &DVector<f64>,
    data: &Dataset,
    batch: &[usize],
    eta: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let p = w.len();
    if p > DENSE_ORACLE_MAX_DIM {
        return Err(IfsError::DimensionTooLarge { dim: p });
    }
    let mut j = DMatrix::zeros(p, p);
    let mut e = DVector::zeros(p);
    for k in 0..p {
        e[k] = 1.0;
        j.set_column(k, &problem.jacobian_apply(w, data, batch, eta, &e));
        e[k] = 0.0;
    }
    let norm = symmetric_spectral_norm(&j);
    Ok((j, norm))
}

/// Monte-Carlo estimate of the mean log Jacobian norm and its inverse `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    #[serde(rename = "R")]
    pub r: f64,
    /// Mean of `per_sample_lognorms`.
    #[serde(rename = "inverse_R")]
    pub inverse_r: f64,
    #[serde(skip)]
    pub per_sample_lognorms: DMatrix<f64>,
    pub n_w: usize,
    pub n_u: usize,
    pub seed: u64,
    /// Share of the `n_w * n_u` power iterations that met their tolerance.
    pub converged_fraction: f64,
}

fn finish(grid: Vec<Vec<(f64, bool)>>, n_w: usize, n_u: usize, seed: u64) -> Result<ComplexityEstimate> {
    let flat: Vec<f64> = grid.iter().flatten().map(|c| c.0).collect();
    let converged = grid.iter().flatten().filter(|c| c.1).count();
    let inverse_r = pairwise_sum(&flat) / flat.len() as f64;
    if inverse_r.abs() < 1e-12 {
        return Err(IfsError::ZeroMeanLogNorm { inverse_r });
    }
    Ok(ComplexityEstimate {
        r: 1.0 / inverse_r,
        inverse_r,
        per_sample_lognorms: DMatrix::from_row_slice(n_w, n_u, &flat),
        n_w,
        n_u,
        seed,
        converged_fraction: converged as f64 / flat.len() as f64,
    })
}

fn check_grid(cloud: &SampleCloud, n_w: usize, n_u: usize) -> Result<()> {
    if n_w == 0 || n_u == 0 {
        return Err(IfsError::InvalidArgument("need n_w >= 1 and n_u >= 1".into()));
    }
    if cloud.len() < n_w {
        return Err(IfsError::InvalidArgument(format!(
            "cloud has {} points, fewer than n_w = {n_w}",
            cloud.len()
        )));
    }
    Ok(())
}

/// `R` for SGD on `problem`: the mean of `log ||J_{h_U}(W)||` over `n_w`
/// evenly strided cloud points and `n_u` batches drawn once from the scheme.
///
/// Batches come from an RNG seeded with `config.seed`; the power iteration
/// for cell `(i, j)` uses `child_seed(config.seed, i * n_u + j + 1)`. Rows run
/// in parallel and the reduction is row-major pairwise, so the result is
/// bit-identical for a given seed regardless of thread count.
#[allow(clippy::too_many_arguments)]
pub fn estimate_r(
    problem: &Problem,
    data: &Dataset,
    scheme: &BatchScheme,
    eta: f64,
    cloud: &SampleCloud,
    n_w: usize,
    n_u: usize,
    config: &PowerIterConfig,
) -> Result<ComplexityEstimate> {
    check_grid(cloud, n_w, n_u)?;
    problem.validate_for(data)?;
    let p = problem.param_dim(data.d());
    if cloud.dim() != p {
        return Err(IfsError::DimensionMismatch { expected: p, got: cloud.dim() });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let cum = cumulative(scheme.probs());
    let drawn: Vec<_> = (0..n_u).map(|_| scheme.draw(&mut rng, &cum)).collect();
    let rows = cloud.strided_indices(n_w);

    let grid = rows
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let w = cloud.point_vec(k);
            drawn
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let batch = scheme.resolve(d);
                    let cfg = config.with_seed(child_seed(config.seed, (i * n_u + j + 1) as u64));
                    let h = problem.batch_hessian(&w, data, batch);
                    let r = spectral_norm_power_iter(|v| v - h.apply(v) * eta, p, &cfg)?;
                    Ok((r.norm.ln(), r.converged))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    finish(grid, n_w, n_u, config.seed)
}

/// Same statistic for an explicit map family (affine, preconditioned, or
/// Newton maps), drawing map indices from the system's probabilities.
pub fn estimate_r_for_system(
    system: &IfsSystem,
    cloud: &SampleCloud,
    n_w: usize,
    n_u: usize,
    config: &PowerIterConfig,
) -> Result<ComplexityEstimate> {
    check_grid(cloud, n_w, n_u)?;
    if cloud.dim() != system.dim() {
        return Err(IfsError::DimensionMismatch { expected: system.dim(), got: cloud.dim() });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let drawn: Vec<usize> = (0..n_u).map(|_| rng.categorical(system.cumulative_probs())).collect();
    let rows = cloud.strided_indices(n_w);

    let grid = rows
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let w = cloud.point_vec(k);
            drawn
                .iter()
                .enumerate()
                .map(|(j, &m)| {
                    let cfg = config.with_seed(child_seed(config.seed, (i * n_u + j + 1) as u64));
                    let r = system.maps()[m].jacobian_norm(&w, &cfg)?;
                    Ok((r.norm.ln(), r.converged))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    finish(grid, n_w, n_u, config.seed)
}

/// Constants entering the generalization bound. The defaults
/// (`nu = kappa = L = M = 1`, `zeta = 0.05`) are placeholders suitable for
/// relative comparisons only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationInputs {
    pub nu: f64,
    pub kappa: f64,
    pub lipschitz: f64,
    /// Stability constant, at least 1.
    pub stability: f64,
    /// Failure probability zeta, in (0, 1/2).
    pub confidence: f64,
    pub n: usize,
}

impl GeneralizationInputs {
    pub fn with_n(n: usize) -> Self {
        Self { nu: 1.0, kappa: 1.0, lipschitz: 1.0, stability: 1.0, confidence: 0.05, n }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nu > 0.0
            && self.kappa > 0.0
            && self.lipschitz > 0.0
            && self.stability >= 1.0
            && self.confidence > 0.0
            && self.confidence < 0.5
            && self.n >= 1;
        if !ok {
            return Err(IfsError::InvalidArgument(
                "need nu, kappa, L > 0, M >= 1, 0 < zeta < 1/2 and n >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `8 nu sqrt(dim * ln^2(n L^2) / n + ln(13 M / zeta) / n)`.
pub fn bound_theorem1(dim_h: f64, inputs: &GeneralizationInputs) -> Result<f64> {
    inputs.validate()?;
    if !(dim_h >= 0.0) {
        return Err(IfsError::InvalidArgument("dimension must be >= 0".into()));
    }
    let n = inputs.n as f64;
    let log_nl = (n * inputs.lipschitz * inputs.lipschitz).ln();
    let conf = (13.0 * inputs.stability / inputs.confidence).ln();
    Ok(8.0 * inputs.nu * (dim_h * log_nl * log_nl / n + conf / n).sqrt())
}

/// [`bound_theorem1`] with the dimension replaced by the entropy ratio.
pub fn bound_corollary1(rams: &RamsBound, inputs: &GeneralizationInputs) -> Result<f64> {
    if !(rams.mean_log_jacobian < 0.0) {
        return Err(IfsError::NonContractiveEstimate { mean_log: rams.mean_log_jacobian });
    }
    bound_theorem1(rams.ratio, inputs)
}

/// `|mean train loss - mean test loss|` at `w`, regularizer included on both sides.
pub fn generalization_gap(problem: &Problem, train: &Dataset, test: &Dataset, w: &DVector<f64>) -> Result<f64> {
    if train.d() != test.d() {
        return Err(IfsError::DimensionMismatch { expected: train.d(), got: test.d() });
    }
    problem.validate_for(train)?;
    problem.validate_for(test)?;
    Ok((problem.mean_loss(w, train) - problem.mean_loss(w, test)).abs())
}
