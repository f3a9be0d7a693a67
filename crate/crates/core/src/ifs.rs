//! Iterated function systems: map families, seeded iteration, invariant
//! measure sampling, and contractivity / Lyapunov diagnostics.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::complexity::power::{matrix_operator_norm, spectral_norm_power_iter, tight_config};
use crate::complexity::{PowerIterConfig, PowerIterResult};
use crate::error::{IfsError, Result};
use crate::optimizers::PreconditionerSpec;
use crate::problems::{check_probs, Dataset, Problem};
use crate::rng::{cumulative, Xoshiro256PlusPlus};
use crate::ParamVector;

/// `h(w) = M w + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != offset.len() {
            return Err(IfsError::DimensionMismatch { expected: matrix.nrows(), got: offset.len() });
        }
        Ok(Self { matrix, offset })
    }

    /// Scalar map `w -> slope * w + offset` on the real line.
    pub fn scalar(slope: f64, offset: f64) -> Self {
        Self { matrix: DMatrix::from_element(1, 1, slope), offset: DVector::from_element(1, offset) }
    }
}

/// One gradient step `h(w) = w - eta P^{-1} grad R_S(w)` on a fixed batch `S`,
/// with `P = I` unless a preconditioner is attached.
#[derive(Debug, Clone)]
pub struct GradientMap {
    pub problem: Arc<Problem>,
    pub dataset: Arc<Dataset>,
    pub batch_id: usize,
    pub batch: Vec<usize>,
    pub eta: f64,
    pub preconditioner: Option<Arc<PreconditionerSpec>>,
}

impl GradientMap {
    fn dim(&self) -> usize {
        self.problem.param_dim(self.dataset.d())
    }

    fn apply_into(&self, w: &DVector<f64>, out: &mut DVector<f64>) {
        self.problem.grad_into(w, &self.dataset, &self.batch, out);
        if let Some(p) = &self.preconditioner {
            *out = p.solve(out);
        }
        // out <- w - eta * out
        out.axpy(1.0, w, -self.eta);
    }

    pub fn jacobian_apply(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let hv = self.problem.hvp(w, &self.dataset, &self.batch, v);
        match &self.preconditioner {
            None => v - hv * self.eta,
            Some(p) => v - p.solve(&hv) * self.eta,
        }
    }

    pub fn jacobian_transpose_apply(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match &self.preconditioner {
            None => self.jacobian_apply(w, v),
            Some(p) => {
                let pv = p.solve(v);
                v - self.problem.hvp(w, &self.dataset, &self.batch, &pv) * self.eta
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum MapDescriptor {
    Affine(AffineMap),
    ProblemBacked(GradientMap),
}

impl MapDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            MapDescriptor::Affine(a) => a.offset.len(),
            MapDescriptor::ProblemBacked(g) => g.dim(),
        }
    }

    /// `out <- h(w)`.
    pub fn apply_into(&self, w: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            MapDescriptor::Affine(a) => {
                out.copy_from(&a.offset);
                out.gemv(1.0, &a.matrix, w, 1.0);
            }
            MapDescriptor::ProblemBacked(g) => g.apply_into(w, out),
        }
    }

    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(w.len());
        self.apply_into(w, &mut out);
        out
    }

    /// `J_h(w) v`.
    pub fn jacobian_apply(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            MapDescriptor::Affine(a) => &a.matrix * v,
            MapDescriptor::ProblemBacked(g) => g.jacobian_apply(w, v),
        }
    }

    /// Operator norm `||J_h(w)||`. Symmetric Jacobians (plain SGD steps) use
    /// power iteration directly; others iterate on `J^T J`.
    pub fn jacobian_norm(&self, w: &DVector<f64>, config: &PowerIterConfig) -> Result<PowerIterResult> {
        match self {
            MapDescriptor::Affine(a) => matrix_operator_norm(&a.matrix, config),
            MapDescriptor::ProblemBacked(g) => {
                let h = g.problem.batch_hessian(w, &g.dataset, &g.batch);
                match &g.preconditioner {
                    None => spectral_norm_power_iter(|v| v - h.apply(v) * g.eta, g.dim(), config),
                    Some(p) => {
                        // J = I - eta P^{-1} H and J^T = I - eta H P^{-1}.
                        let r = spectral_norm_power_iter(
                            |v| {
                                let jv = v - p.solve(&h.apply(v)) * g.eta;
                                &jv - h.apply(&p.solve(&jv)) * g.eta
                            },
                            g.dim(),
                            config,
                        )?;
                        Ok(PowerIterResult { norm: r.norm.sqrt(), ..r })
                    }
                }
            }
        }
    }

    pub fn as_affine(&self) -> Option<&AffineMap> {
        match self {
            MapDescriptor::Affine(a) => Some(a),
            MapDescriptor::ProblemBacked(_) => None,
        }
    }
}

/// Maps `h_i` chosen with probabilities `p_i` at every step.
#[derive(Debug, Clone)]
pub struct IfsSystem {
    maps: Vec<MapDescriptor>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    dim: usize,
}

impl IfsSystem {
    pub fn new(maps: Vec<MapDescriptor>, probs: Vec<f64>) -> Result<Self> {
        if maps.is_empty() {
            return Err(IfsError::InvalidArgument("an IFS needs at least one map".into()));
        }
        if maps.len() != probs.len() {
            return Err(IfsError::InvalidArgument(format!(
                "{} maps but {} probabilities",
                maps.len(),
                probs.len()
            )));
        }
        check_probs(&probs)?;
        let dim = maps[0].dim();
        for m in &maps {
            if m.dim() != dim {
                return Err(IfsError::DimensionMismatch { expected: dim, got: m.dim() });
            }
        }
        let cumulative = cumulative(&probs);
        Ok(Self { maps, probs, cumulative, dim })
    }

    /// Equal probabilities `1/m`.
    pub fn uniform(maps: Vec<MapDescriptor>) -> Result<Self> {
        let m = maps.len().max(1);
        Self::new(maps, vec![1.0 / m as f64; m])
    }

    /// The middle-third Cantor system `{w/3, w/3 + 2/3}` with `p = (1/2, 1/2)`.
    pub fn cantor() -> Self {
        Self::uniform(vec![
            MapDescriptor::Affine(AffineMap::scalar(1.0 / 3.0, 0.0)),
            MapDescriptor::Affine(AffineMap::scalar(1.0 / 3.0, 2.0 / 3.0)),
        ])
        .expect("valid system")
    }

    pub fn maps(&self) -> &[MapDescriptor] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cumulative_probs(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    /// `-sum p_i log p_i`.
    pub fn neg_entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| p * p.ln()).sum::<f64>()
    }

    fn check_start(&self, w0: &DVector<f64>) -> Result<()> {
        if w0.len() != self.dim {
            return Err(IfsError::DimensionMismatch { expected: self.dim, got: w0.len() });
        }
        if w0.iter().any(|x| !x.is_finite()) {
            return Err(IfsError::InvalidArgument("starting point is not finite".into()));
        }
        Ok(())
    }
}

/// Stateful walker over an [`IfsSystem`]; the building block of
/// [`iterate`] and [`sample_invariant`].
pub struct IfsChain<'a> {
    system: &'a IfsSystem,
    state: DVector<f64>,
    scratch: DVector<f64>,
    rng: Xoshiro256PlusPlus,
    steps: usize,
}

impl<'a> IfsChain<'a> {
    pub fn new(system: &'a IfsSystem, w0: &DVector<f64>, seed: u64) -> Result<Self> {
        system.check_start(w0)?;
        Ok(Self {
            system,
            state: w0.clone(),
            scratch: DVector::zeros(w0.len()),
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            steps: 0,
        })
    }

    /// Applies one randomly chosen map; returns its index.
    pub fn step(&mut self) -> Result<usize> {
        let i = self.rng.categorical(&self.system.cumulative);
        self.system.maps[i].apply_into(&self.state, &mut self.scratch);
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.steps += 1;
        if self.state.iter().any(|x| !x.is_finite()) {
            return Err(IfsError::NonFiniteState { step: self.steps });
        }
        Ok(i)
    }

    pub fn advance(&mut self, k: usize) -> Result<()> {
        for _ in 0..k {
            self.step()?;
        }
        Ok(())
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// A run `w_0, w_1, .., w_k` with the map indices `U_1..U_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ParamVector>,
    pub chosen_indices: Vec<usize>,
    pub seed: u64,
}

/// Runs `k` steps from `w0`.
pub fn iterate(system: &IfsSystem, w0: &ParamVector, k: usize, seed: u64) -> Result<Trajectory> {
    if k == 0 {
        return Err(IfsError::InvalidArgument("k must be >= 1".into()));
    }
    let mut chain = IfsChain::new(system, w0, seed)?;
    let mut states = Vec::with_capacity(k + 1);
    let mut chosen = Vec::with_capacity(k);
    states.push(w0.clone());
    for _ in 0..k {
        chosen.push(chain.step()?);
        states.push(chain.state().clone());
    }
    Ok(Trajectory { states, chosen_indices: chosen, seed })
}

/// Post-burn-in iterates standing in for the invariant measure, stored
/// row-major (`len() x dim()`), each tagged with its iteration number.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    data: Vec<f64>,
    iters: Vec<u64>,
    dim: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl SampleCloud {
    /// Cloud whose `j`-th row is iterate `burn_in + (j + 1) * thin`.
    pub fn new(data: Vec<f64>, dim: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(IfsError::InvalidArgument("cloud data is not a whole number of rows".into()));
        }
        let n = data.len() / dim;
        let iters = (1..=n as u64).map(|j| (burn_in + thin * j as usize) as u64).collect();
        Self::with_iters(data, iters, dim, burn_in, thin, seed)
    }

    pub fn with_iters(
        data: Vec<f64>,
        iters: Vec<u64>,
        dim: usize,
        burn_in: usize,
        thin: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || data.len() != iters.len() * dim {
            return Err(IfsError::InvalidArgument("cloud data and iteration tags disagree".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(IfsError::InvalidArgument("cloud contains non-finite values".into()));
        }
        Ok(Self { data, iters, dim, burn_in, thin, seed })
    }

    pub fn len(&self) -> usize {
        self.iters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iters.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn point_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(k))
    }

    pub fn iteration(&self, k: usize) -> u64 {
        self.iters[k]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for p in self.points() {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += x;
            }
        }
        m / self.len().max(1) as f64
    }

    /// Coordinate-wise `(min, max)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// `count` row indices evenly strided over the cloud.
    pub fn strided_indices(&self, count: usize) -> Vec<usize> {
        let n = self.len();
        (0..count).map(|i| i * n / count.max(1)).collect()
    }

    /// Rows `range` as a new cloud (keeps metadata).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
            iters: self.iters[range].to_vec(),
            ..self.clone()
        }
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { data: self.data.iter().map(|x| x * factor).collect(), ..self.clone() }
    }

    /// CSV with header `iter,w0,..,w{d-1}`; floats in 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("iter");
        for k in 0..self.dim {
            header.push_str(&format!(",w{k}"));
        }
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for (j, p) in self.points().enumerate() {
            line.clear();
            line.push_str(&self.iters[j].to_string());
            for x in p {
                line.push(',');
                line.push_str(&format!("{x:.16e}"));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout produced by [`SampleCloud::write_csv`]. Burn-in and
    /// thinning are inferred from the iteration column; the seed is not
    /// stored in the file and reads back as 0.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| IfsError::MalformedRow { row: 0, message: "empty file".into() })??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.first() != Some(&"iter") || cols.len() < 2 {
            return Err(IfsError::MalformedRow { row: 0, message: "header must start with `iter,w0`".into() });
        }
        for (k, c) in cols[1..].iter().enumerate() {
            if *c != format!("w{k}") {
                return Err(IfsError::MalformedRow { row: 0, message: format!("unexpected column `{c}`") });
            }
        }
        let dim = cols.len() - 1;
        let mut data = Vec::new();
        let mut iters = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(IfsError::MalformedRow { row, message: "wrong field count".into() });
            }
            iters.push(
                fields[0]
                    .parse()
                    .map_err(|_| IfsError::MalformedRow { row, message: format!("bad iteration `{}`", fields[0]) })?,
            );
            for f in &fields[1..] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| IfsError::MalformedRow { row, message: format!("bad number `{f}`") })?,
                );
            }
        }
        let thin = match iters.as_slice() {
            [a, b, ..] => (b - a) as usize,
            _ => 1,
        };
        let burn_in = iters.first().map_or(0, |&f| (f as usize).saturating_sub(thin));
        Self::with_iters(data, iters, dim, burn_in, thin, 0)
    }
}

/// Iterates `k = burn_in + thin, burn_in + 2 thin, ..` (`n_samples` of them).
pub fn sample_invariant(
    system: &IfsSystem,
    w0: &ParamVector,
    burn_in: usize,
    n_samples: usize,
    thin: usize,
    seed: u64,
) -> Result<SampleCloud> {
    if n_samples == 0 || thin == 0 {
        return Err(IfsError::InvalidArgument("need n_samples >= 1 and thin >= 1".into()));
    }
    let mut chain = IfsChain::new(system, w0, seed)?;
    chain.advance(burn_in)?;
    let mut data = Vec::with_capacity(n_samples * system.dim());
    for _ in 0..n_samples {
        chain.advance(thin)?;
        data.extend_from_slice(chain.state().as_slice());
    }
    SampleCloud::new(data, system.dim(), burn_in, thin, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractivityMethod {
    Analytic,
    /// Lipschitz constants of problem-backed maps are maxima over sampled
    /// pairs, hence lower bounds.
    SampledPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractivityProbe {
    Analytic,
    /// Both points uniform in the ball of `radius` around `center`.
    SampledPairs { n_pairs: usize, radius: f64, seed: u64, center: DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractivityReport {
    pub per_map_lipschitz: Vec<f64>,
    /// `sum p_i log L_i`.
    pub mean_log_lipschitz: f64,
    pub is_avg_contractive: bool,
    pub method: ContractivityMethod,
}

/// Per-map Lipschitz constants and the average-contractivity test
/// `sum p_i log L_i < 0`. Affine maps always use the exact operator norm.
pub fn contractivity_report(system: &IfsSystem, probe: &ContractivityProbe) -> Result<ContractivityReport> {
    let mut method = ContractivityMethod::Analytic;
    let mut lips = Vec::with_capacity(system.num_maps());
    for map in system.maps() {
        let l = match (map, probe) {
            (MapDescriptor::Affine(a), _) => matrix_operator_norm(&a.matrix, &tight_config())?.norm,
            (MapDescriptor::ProblemBacked(_), ContractivityProbe::Analytic) => {
                return Err(IfsError::InvalidArgument(
                    "analytic contractivity needs all-affine maps; use a sampled-pairs probe".into(),
                ))
            }
            (MapDescriptor::ProblemBacked(_), ContractivityProbe::SampledPairs { n_pairs, radius, seed, center }) => {
                method = ContractivityMethod::SampledPairs;
                sampled_lipschitz(map, *n_pairs, *radius, *seed, center)?
            }
        };
        lips.push(l);
    }
    let mean_log = lips.iter().zip(system.probs()).map(|(l, p)| p * l.ln()).sum::<f64>();
    Ok(ContractivityReport {
        per_map_lipschitz: lips,
        mean_log_lipschitz: mean_log,
        is_avg_contractive: mean_log < 0.0,
        method,
    })
}

fn sampled_lipschitz(map: &MapDescriptor, n_pairs: usize, radius: f64, seed: u64, center: &DVector<f64>) -> Result<f64> {
    if center.len() != map.dim() {
        return Err(IfsError::DimensionMismatch { expected: map.dim(), got: center.len() });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_pairs {
        let x = center + uniform_in_ball(&mut rng, center.len(), radius);
        let y = center + uniform_in_ball(&mut rng, center.len(), radius);
        let dist = (&x - &y).norm();
        if dist < 1e-12 {
            return Err(IfsError::DegenerateProbe { distance: dist });
        }
        best = best.max((map.apply(&x) - map.apply(&y)).norm() / dist);
    }
    Ok(best)
}

fn uniform_in_ball(rng: &mut Xoshiro256PlusPlus, dim: usize, radius: f64) -> DVector<f64> {
    let dir = DVector::from_vec(rng.normal_vec(dim));
    let r = radius * rng.next_f64().powf(1.0 / dim as f64);
    dir.normalize() * r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub rho: f64,
    pub chain_length: usize,
    pub renorm_interval: usize,
}

/// Top Lyapunov exponent of the random product of Jacobians along one chain:
/// a random unit vector is pushed through `J_{U_k} .. J_{U_1}` and its log
/// growth, collected at every renormalization, is averaged over `k` steps.
pub fn lyapunov_exponent(
    system: &IfsSystem,
    w0: &ParamVector,
    k: usize,
    renorm_interval: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if k < 1000 {
        return Err(IfsError::InvalidArgument("Lyapunov estimates need k >= 1000".into()));
    }
    if renorm_interval == 0 || renorm_interval > k {
        return Err(IfsError::InvalidArgument("need 1 <= renorm_interval <= k".into()));
    }
    system.check_start(w0)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut v = DVector::from_vec(rng.normal_vec(system.dim())).normalize();
    let mut w = w0.clone();
    let mut next = DVector::zeros(w.len());
    let mut log_growth = 0.0;
    for step in 1..=k {
        let i = rng.categorical(system.cumulative_probs());
        let map = &system.maps()[i];
        v = map.jacobian_apply(&w, &v);
        map.apply_into(&w, &mut next);
        std::mem::swap(&mut w, &mut next);
        if step % renorm_interval == 0 || step == k {
            let n = v.norm();
            if !n.is_finite() || w.iter().any(|x| !x.is_finite()) {
                return Err(IfsError::NonFiniteState { step });
            }
            if n == 0.0 {
                return Ok(LyapunovEstimate { rho: f64::NEG_INFINITY, chain_length: k, renorm_interval });
            }
            log_growth += n.ln();
            v /= n;
        }
    }
    Ok(LyapunovEstimate { rho: log_growth / k as f64, chain_length: k, renorm_interval })
}
