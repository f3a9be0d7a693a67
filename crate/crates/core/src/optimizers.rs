//! Builders that turn (problem, data, batch scheme, step size) into the IFS
//! of SGD, preconditioned SGD, or stochastic Newton.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::complexity::power::spectral_norm_power_iter;
use crate::complexity::PowerIterConfig;
use crate::error::{IfsError, Result};
use crate::ifs::{AffineMap, GradientMap, IfsSystem, MapDescriptor, SampleCloud};
use crate::problems::{BatchMode, BatchScheme, Dataset, Problem};
use crate::rng::Xoshiro256PlusPlus;
use crate::ParamVector;

/// Splits `0..n` into batches of size `b`.
///
/// Partition batches are contiguous in dataset order unless `shuffle_seed`
/// is given, in which case the order is a seeded permutation first.
pub fn partition_batches(n: usize, b: usize, mode: BatchMode, shuffle_seed: Option<u64>) -> Result<BatchScheme> {
    match mode {
        BatchMode::Subset => BatchScheme::subset(n, b),
        BatchMode::Partition => {
            if b == 0 || n == 0 || !n.is_multiple_of(b) {
                return Err(IfsError::IndivisibleBatch { n, b });
            }
            let order: Vec<usize> = match shuffle_seed {
                None => (0..n).collect(),
                Some(seed) => Xoshiro256PlusPlus::seed_from_u64(seed).sample_without_replacement(n, n),
            };
            let batches: Vec<Vec<usize>> = order.chunks(b).map(<[usize]>::to_vec).collect();
            let m = batches.len();
            BatchScheme::from_batches(n, batches, vec![1.0 / m as f64; m])
        }
    }
}

/// Fixed symmetric positive definite preconditioner `H` with
/// `m_low I <= H <= m_high I`; `H^{-1}` is applied through one Cholesky factor.
#[derive(Debug, Clone)]
pub struct PreconditionerSpec {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub m_low: f64,
    pub m_high: f64,
}

impl PreconditionerSpec {
    pub fn new(matrix: DMatrix<f64>, m_low: f64, m_high: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(IfsError::InvalidArgument("preconditioner must be square".into()));
        }
        if crate::linalg::asymmetry(&matrix) > 1e-12 {
            return Err(IfsError::InvalidArgument("preconditioner must be symmetric".into()));
        }
        if !(m_low > 0.0 && m_low <= m_high) {
            return Err(IfsError::InvalidArgument("need 0 < m_low <= m_high".into()));
        }
        let chol = Cholesky::new(matrix.clone()).ok_or(IfsError::NotPositiveDefinite)?;
        let spec = Self { matrix, chol, m_low, m_high };
        spec.verify_bounds()?;
        Ok(spec)
    }

    /// `H = diag(diag)`, bounds taken from the extreme entries.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(IfsError::InvalidArgument("empty preconditioner diagonal".into()));
        }
        if diag.iter().any(|&x| !(x > 0.0)) {
            return Err(IfsError::NotPositiveDefinite);
        }
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().copied().fold(0.0, f64::max);
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)), lo, hi)
    }

    /// Checks `lambda_max(H) <= m_high` and `lambda_max(H^{-1}) <= 1/m_low`
    /// by power iteration, with relative slack 1e-8.
    fn verify_bounds(&self) -> Result<()> {
        let cfg = PowerIterConfig { tol: 1e-12, max_iters: 50_000, seed: 1 };
        let top = spectral_norm_power_iter(|v| &self.matrix * v, self.dim(), &cfg)?.norm;
        let inv_top = spectral_norm_power_iter(|v| self.solve(v), self.dim(), &cfg)?.norm;
        if top > self.m_high * (1.0 + 1e-8) {
            return Err(IfsError::PreconditionViolation {
                condition: format!("largest eigenvalue {top} <= M = {}", self.m_high),
                margin: self.m_high - top,
            });
        }
        let bottom = 1.0 / inv_top;
        if bottom < self.m_low * (1.0 - 1e-8) {
            return Err(IfsError::PreconditionViolation {
                condition: format!("smallest eigenvalue {bottom} >= m = {}", self.m_low),
                margin: bottom - self.m_low,
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `H^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

#[derive(Debug, Clone)]
pub enum OptimizerKind {
    Sgd,
    PreconditionedSgd(Arc<PreconditionerSpec>),
    StochasticNewton,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
}

/// Dispatches to the builder for `config.kind`.
pub fn build_ifs(config: &OptimizerConfig, problem: &Problem, data: &Arc<Dataset>, scheme: &BatchScheme) -> Result<IfsSystem> {
    match &config.kind {
        OptimizerKind::Sgd => build_sgd_ifs(problem, data, scheme, config.eta),
        OptimizerKind::PreconditionedSgd(spec) => build_precond_sgd_ifs(problem, data, scheme, config.eta, spec),
        OptimizerKind::StochasticNewton => build_stoch_newton_ifs(problem, data, scheme, config.eta),
    }
}

fn check_common(problem: &Problem, data: &Dataset, scheme: &BatchScheme, eta: f64) -> Result<()> {
    problem.validate_for(data)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(IfsError::InvalidArgument("step size must be > 0".into()));
    }
    if scheme.mode() != BatchMode::Partition {
        return Err(IfsError::InvalidArgument(
            "explicit map families need a partition; iterate subset schemes with SubsetSgd".into(),
        ));
    }
    if scheme.n() != data.n() {
        return Err(IfsError::DimensionMismatch { expected: data.n(), got: scheme.n() });
    }
    Ok(())
}

/// `(H_i, s_i)` with `H_i = (1/b) sum a_j a_j^T` and `s_i = sum a_j y_j`.
fn batch_moments(data: &Dataset, batch: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let d = data.d();
    let mut h = DMatrix::zeros(d, d);
    let mut s = DVector::zeros(d);
    let inv_b = 1.0 / batch.len() as f64;
    for &j in batch {
        let a = data.features(j);
        h.ger(inv_b, a, a, 1.0);
        s.axpy(data.target(j), a, 1.0);
    }
    (h, s)
}

fn gradient_maps(
    problem: &Problem,
    data: &Arc<Dataset>,
    scheme: &BatchScheme,
    eta: f64,
    preconditioner: Option<Arc<PreconditionerSpec>>,
) -> Result<IfsSystem> {
    let problem = Arc::new(problem.clone());
    let maps = scheme
        .batches()
        .iter()
        .enumerate()
        .map(|(i, batch)| {
            MapDescriptor::ProblemBacked(GradientMap {
                problem: problem.clone(),
                dataset: data.clone(),
                batch_id: i,
                batch: batch.clone(),
                eta,
                preconditioner: preconditioner.clone(),
            })
        })
        .collect();
    IfsSystem::new(maps, scheme.probs().to_vec())
}

/// SGD maps `h_i(w) = w - eta grad R_{S_i}(w)`. Least squares yields affine
/// maps `M_i = (1 - eta lambda) I - eta H_i`, `q_i = (eta/b) sum a_j y_j`.
pub fn build_sgd_ifs(problem: &Problem, data: &Arc<Dataset>, scheme: &BatchScheme, eta: f64) -> Result<IfsSystem> {
    check_common(problem, data, scheme, eta)?;
    match problem {
        Problem::LeastSquares { lambda } => {
            let d = data.d();
            let maps = scheme
                .batches()
                .iter()
                .map(|batch| {
                    let (h, s) = batch_moments(data, batch);
                    let m = DMatrix::identity(d, d) * (1.0 - eta * lambda) - h * eta;
                    let q = s * (eta / batch.len() as f64);
                    MapDescriptor::Affine(AffineMap { matrix: m, offset: q })
                })
                .collect();
            IfsSystem::new(maps, scheme.probs().to_vec())
        }
        _ => gradient_maps(problem, data, scheme, eta, None),
    }
}

/// Preconditioned SGD `w - eta H^{-1} grad R_{S_i}(w)`. Least squares yields
/// `M_i = I - eta lambda H^{-1} - eta H^{-1} H_i`, `q_i = (eta/b) H^{-1} sum a_j y_j`.
pub fn build_precond_sgd_ifs(
    problem: &Problem,
    data: &Arc<Dataset>,
    scheme: &BatchScheme,
    eta: f64,
    spec: &Arc<PreconditionerSpec>,
) -> Result<IfsSystem> {
    check_common(problem, data, scheme, eta)?;
    let p = problem.param_dim(data.d());
    if spec.dim() != p {
        return Err(IfsError::DimensionMismatch { expected: p, got: spec.dim() });
    }
    match problem {
        Problem::LeastSquares { lambda } => {
            let d = data.d();
            let h_inv = spec.inverse();
            let maps = scheme
                .batches()
                .iter()
                .map(|batch| {
                    let (h, s) = batch_moments(data, batch);
                    let m = DMatrix::identity(d, d) - &h_inv * (eta * lambda) - (&h_inv * h) * eta;
                    let q = spec.solve(&s) * (eta / batch.len() as f64);
                    MapDescriptor::Affine(AffineMap { matrix: m, offset: q })
                })
                .collect();
            IfsSystem::new(maps, scheme.probs().to_vec())
        }
        _ => gradient_maps(problem, data, scheme, eta, Some(spec.clone())),
    }
}

/// Stochastic Newton for regularized least squares: `M_i = (1 - eta) I`,
/// `q_i = eta Ht_i^{-1} (1/b) sum a_j y_j` with `Ht_i = H_i + lambda I`.
pub fn build_stoch_newton_ifs(problem: &Problem, data: &Arc<Dataset>, scheme: &BatchScheme, eta: f64) -> Result<IfsSystem> {
    check_common(problem, data, scheme, eta)?;
    let lambda = match problem {
        Problem::LeastSquares { lambda } if *lambda > 0.0 => *lambda,
        Problem::LeastSquares { .. } => {
            return Err(IfsError::InvalidArgument("stochastic Newton needs lambda > 0".into()))
        }
        _ => return Err(IfsError::InvalidArgument("stochastic Newton is implemented for least squares only".into())),
    };
    let d = data.d();
    let mut maps = Vec::with_capacity(scheme.batches().len());
    for (i, batch) in scheme.batches().iter().enumerate() {
        let (h, s) = batch_moments(data, batch);
        let shifted = h + DMatrix::identity(d, d) * lambda;
        let chol = Cholesky::new(shifted).ok_or(IfsError::SingularBatchHessian { batch: i })?;
        let q = chol.solve(&(s / batch.len() as f64)) * eta;
        maps.push(MapDescriptor::Affine(AffineMap { matrix: DMatrix::identity(d, d) * (1.0 - eta), offset: q }));
    }
    IfsSystem::new(maps, scheme.probs().to_vec())
}

/// SGD over a subset scheme: each step draws `b` fresh indices without
/// replacement, so the `C(n, b)` maps are never materialized.
pub struct SubsetSgd<'a> {
    problem: &'a Problem,
    data: &'a Dataset,
    scheme: &'a BatchScheme,
    eta: f64,
}

impl<'a> SubsetSgd<'a> {
    pub fn new(problem: &'a Problem, data: &'a Dataset, scheme: &'a BatchScheme, eta: f64) -> Result<Self> {
        problem.validate_for(data)?;
        if scheme.mode() != BatchMode::Subset {
            return Err(IfsError::InvalidArgument("SubsetSgd needs a subset scheme".into()));
        }
        Ok(Self { problem, data, scheme, eta })
    }

    /// Same sampling contract as [`crate::ifs::sample_invariant`].
    pub fn sample(&self, w0: &ParamVector, burn_in: usize, n_samples: usize, thin: usize, seed: u64) -> Result<SampleCloud> {
        if n_samples == 0 || thin == 0 {
            return Err(IfsError::InvalidArgument("need n_samples >= 1 and thin >= 1".into()));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut w = w0.clone();
        let mut g = DVector::zeros(w.len());
        let mut data = Vec::with_capacity(n_samples * w.len());
        let total = burn_in + n_samples * thin;
        for step in 1..=total {
            let batch = rng.sample_without_replacement(self.scheme.n(), self.scheme.batch_size());
            self.problem.grad_into(&w, self.data, &batch, &mut g);
            w.axpy(-self.eta, &g, 1.0);
            if w.iter().any(|x| !x.is_finite()) {
                return Err(IfsError::NonFiniteState { step });
            }
            if step > burn_in && (step - burn_in).is_multiple_of(thin) {
                data.extend_from_slice(w.as_slice());
            }
        }
        SampleCloud::new(data, w0.len(), burn_in, thin, seed)
    }
}
