//! Experiment presets: the one-dimensional Cantor-type clouds, the 2-D
//! regression heatmaps, and the `(eta, b)` sweep relating `R` to the
//! generalization gap.

use std::path::Path;
use std::sync::Arc;

use ifslab_core::optimizers::SubsetSgd;
use ifslab_core::rng::{child_seed, Xoshiro256PlusPlus};
use ifslab_core::{
    analytic_bound, box_counting_dimension, build_ifs, build_sgd_ifs, compute_one_layer_c, estimate_r,
    estimate_r_for_system, generalization_gap, partition_batches, rams_ratio, sample_invariant, BatchMode,
    BoundFamily, BoundSpec, ComplexityEstimate, Dataset, DimensionEstimate, IfsChain, IfsSystem, OptimizerKind,
    PowerIterConfig, Problem, SampleCloud, SyntheticSpec,
};
use ifslab_core::problems::generate_synthetic;
use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CantorConfig, ExperimentConfig, Linreg2dConfig, SweepConfig};
use crate::output::{density_heatmap, fmt_f64, histogram, histogram_csv, pgm_bytes, write_atomic, write_json, HEATMAP_SIZE};
use crate::stats::correlation_stats;
use crate::{CliError, Result};

pub const HIST_BINS: usize = 1000;
pub const HIST_RANGE: (f64, f64) = (-0.1, 1.1);

/// Draws the cloud described by an experiment config. Subset-mode SGD runs
/// the lazy sampler; everything else goes through an explicit map family.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(SampleCloud, Arc<Dataset>)> {
    let data = Arc::new(cfg.data.load()?);
    let optimizer = cfg.optimizer.build()?;
    let scheme = cfg.batch.build(data.n())?;
    let p = cfg.problem.param_dim(data.d());
    let w0 = start_point(cfg, p)?;
    let s = &cfg.simulation;
    let cloud = if scheme.mode() == BatchMode::Subset {
        if !matches!(optimizer.kind, OptimizerKind::Sgd) {
            return Err(CliError::Config("subset batches are supported for plain sgd only".into()));
        }
        SubsetSgd::new(&cfg.problem, &data, &scheme, optimizer.eta)?.sample(&w0, s.burn_in, s.n_samples, s.thin, s.seed)?
    } else {
        let system = build_ifs(&optimizer, &cfg.problem, &data, &scheme)?;
        sample_invariant(&system, &w0, s.burn_in, s.n_samples, s.thin, s.seed)?
    };
    Ok((cloud, data))
}

fn start_point(cfg: &ExperimentConfig, p: usize) -> Result<DVector<f64>> {
    match &cfg.simulation.w0 {
        None => Ok(DVector::zeros(p)),
        Some(w) if w.len() == p => Ok(DVector::from_column_slice(w)),
        Some(w) => Err(CliError::Config(format!("w0 has {} entries, the problem has {p} parameters", w.len()))),
    }
}

/// `R` for the config's optimizer on a cloud it produced.
pub fn complexity(cfg: &ExperimentConfig, cloud: &SampleCloud, data: &Arc<Dataset>) -> Result<ComplexityEstimate> {
    let optimizer = cfg.optimizer.build()?;
    let scheme = cfg.batch.build(data.n())?;
    match optimizer.kind {
        OptimizerKind::Sgd => {
            Ok(estimate_r(&cfg.problem, data, &scheme, optimizer.eta, cloud, cfg.n_w, cfg.n_u, &cfg.power_iter)?)
        }
        _ => {
            let system = build_ifs(&optimizer, &cfg.problem, data, &scheme)?;
            Ok(estimate_r_for_system(&system, cloud, cfg.n_w, cfg.n_u, &cfg.power_iter)?)
        }
    }
}

/// b = 1 SGD on the two losses `w^2/2` and `w^2/2 - w`:
/// `h_1(w) = (1 - eta) w`, `h_2(w) = (1 - eta) w + eta`.
pub fn cantor_system(eta: f64) -> Result<IfsSystem> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(CliError::Config(format!("eta = {eta} is outside (0, 1)")));
    }
    // Least squares with a = 1, y in {0, 1} has exactly these gradients.
    let data = Arc::new(Dataset::from_rows(&[&[1.0], &[1.0]], &[0.0, 1.0])?);
    let scheme = partition_batches(2, 1, BatchMode::Partition, None)?;
    Ok(build_sgd_ifs(&Problem::LeastSquares { lambda: 0.0 }, &data, &scheme, eta)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct CantorOutcome {
    pub eta: f64,
    pub dimension: f64,
    pub fit_r2: f64,
    pub rams_ratio: f64,
    /// Share of samples in the open middle third (1/3, 2/3).
    pub middle_third_mass: f64,
    pub error: Option<String>,
}

pub fn run_cantor(cfg: &CantorConfig) -> Result<Vec<CantorOutcome>> {
    if cfg.etas.is_empty() {
        return Err(CliError::Config("etas is empty".into()));
    }
    let systems = cfg.etas.iter().map(|&eta| cantor_system(eta)).collect::<Result<Vec<_>>>()?;
    let mut outcomes = Vec::with_capacity(cfg.etas.len());
    for (&eta, system) in cfg.etas.iter().zip(&systems) {
        let cloud = sample_invariant(system, &DVector::zeros(1), cfg.burn_in, cfg.n_samples, 1, cfg.seed)?;
        let (lo, hi) = HIST_RANGE;
        let counts = histogram(cloud.raw().iter().copied(), lo, hi, HIST_BINS);
        write_atomic(&cfg.out_dir.join(format!("hist_eta{eta:.6}.csv")), histogram_csv(&counts, lo, hi).as_bytes())?;
        let middle = cloud.raw().iter().filter(|&&w| w > 1.0 / 3.0 && w < 2.0 / 3.0).count();
        let rams = rams_ratio(system, &cloud, 1, &PowerIterConfig::default()).map_or(f64::NAN, |r| r.ratio);
        let mut outcome = CantorOutcome {
            eta,
            dimension: f64::NAN,
            fit_r2: f64::NAN,
            rams_ratio: rams,
            middle_third_mass: middle as f64 / cloud.len() as f64,
            error: None,
        };
        match box_counting_dimension(&cloud, &cfg.box_count) {
            Ok(est) => {
                write_json(&cfg.out_dir.join(format!("dimension_eta{eta:.6}.json")), &est)?;
                outcome.dimension = est.value;
                outcome.fit_r2 = est.fit_r2;
            }
            Err(e) => {
                warn!("eta {eta}: {e}");
                outcome.error = Some(e.to_string());
            }
        }
        info!("cantor eta {eta}: dimension {:.4}", outcome.dimension);
        outcomes.push(outcome);
    }
    write_json(&cfg.out_dir.join("summary.json"), &outcomes)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, Serialize)]
pub struct Linreg2dOutcome {
    pub eta: f64,
    pub dimension: f64,
    pub fit_r2: f64,
    pub error: Option<String>,
}

/// Unregularized b = 1 SGD on five uniform points in the plane. Step sizes
/// that diverge are recorded and skipped.
pub fn run_linreg2d(cfg: &Linreg2dConfig) -> Result<Vec<Linreg2dOutcome>> {
    if cfg.etas.is_empty() || cfg.etas.iter().any(|&e| !(e > 0.0)) {
        return Err(CliError::Config("etas must be a nonempty list of positive step sizes".into()));
    }
    let data = Arc::new(generate_synthetic(&SyntheticSpec::UniformLinReg { n: 5, d: 2 }, cfg.data_seed)?);
    let scheme = partition_batches(5, 1, BatchMode::Partition, None)?;
    let problem = Problem::LeastSquares { lambda: 0.0 };
    let mut outcomes = Vec::with_capacity(cfg.etas.len());
    for &eta in &cfg.etas {
        let mut outcome = Linreg2dOutcome { eta, dimension: f64::NAN, fit_r2: f64::NAN, error: None };
        let run = || -> Result<DimensionEstimate> {
            let system = build_sgd_ifs(&problem, &data, &scheme, eta)?;
            let cloud = sample_invariant(&system, &DVector::zeros(2), cfg.burn_in, cfg.n_samples, 1, cfg.seed)?;
            let px = density_heatmap(&cloud, HEATMAP_SIZE)?;
            write_atomic(
                &cfg.out_dir.join(format!("heatmap_eta{eta:.6}.pgm")),
                &pgm_bytes(HEATMAP_SIZE, HEATMAP_SIZE, &px),
            )?;
            let est = box_counting_dimension(&cloud, &cfg.box_count)?;
            write_json(&cfg.out_dir.join(format!("dimension_eta{eta:.6}.json")), &est)?;
            Ok(est)
        };
        match run() {
            Ok(est) => {
                outcome.dimension = est.value;
                outcome.fit_r2 = est.fit_r2;
            }
            Err(e) => {
                warn!("eta {eta}: {e}");
                outcome.error = Some(e.to_string());
            }
        }
        info!("linreg2d eta {eta}: dimension {:.4}", outcome.dimension);
        outcomes.push(outcome);
    }
    write_json(&cfg.out_dir.join("summary.json"), &outcomes)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub batch_size: usize,
    pub r: f64,
    pub inverse_r: f64,
    pub converged_fraction: f64,
    pub box_dim: f64,
    pub analytic_bound: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gen_gap: f64,
    pub train_iters: usize,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(eta: f64, batch_size: usize, error: String) -> Self {
        Self {
            eta,
            batch_size,
            r: f64::NAN,
            inverse_r: f64::NAN,
            converged_fraction: f64::NAN,
            box_dim: f64::NAN,
            analytic_bound: f64::NAN,
            train_loss: f64::NAN,
            test_loss: f64::NAN,
            gen_gap: f64::NAN,
            train_iters: 0,
            error: Some(error),
        }
    }
}

/// Correlation between two sweep columns over the rows where both are finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub x: &'static str,
    pub y: &'static str,
    pub n: usize,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub correlations: Vec<Correlation>,
}

impl SweepResult {
    pub fn correlation(&self, x: &str, y: &str) -> Option<&Correlation> {
        self.correlations.iter().find(|c| c.x == x && c.y == y)
    }

    pub fn rows_csv(&self) -> String {
        let mut s = String::from(
            "eta,batch_size,R,inverse_R,converged_fraction,box_dim,analytic_bound,train_loss,test_loss,gen_gap,train_iters,error\n",
        );
        for r in &self.rows {
            let f = [r.eta, r.r, r.inverse_r, r.converged_fraction, r.box_dim, r.analytic_bound, r.train_loss, r.test_loss, r.gen_gap]
                .map(fmt_f64);
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                f[0],
                r.batch_size,
                f[1],
                f[2],
                f[3],
                f[4],
                f[5],
                f[6],
                f[7],
                f[8],
                r.train_iters,
                csv_field(r.error.as_deref().unwrap_or(""))
            ));
        }
        s
    }

    pub fn correlations_csv(&self) -> String {
        let mut s = String::from("x,y,n,pearson_r,spearman_rho,warning\n");
        for c in &self.correlations {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.x,
                c.y,
                c.n,
                fmt_f64(c.pearson_r),
                fmt_f64(c.spearman_rho),
                csv_field(c.warning.as_deref().unwrap_or(""))
            ));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

fn correlate(rows: &[SweepRow], x: &'static str, y: &'static str, get: impl Fn(&SweepRow) -> (f64, f64)) -> Correlation {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().map(&get).filter(|(a, b)| a.is_finite() && b.is_finite()).unzip();
    let n = xs.len();
    let undefined = |msg: String| {
        warn!("correlation({x}, {y}): {msg}");
        Correlation { x, y, n, pearson_r: f64::NAN, spearman_rho: f64::NAN, warning: Some(msg) }
    };
    if n < 2 {
        return undefined(format!("{n} valid point(s); correlation undefined"));
    }
    match correlation_stats(&xs, &ys) {
        Ok((pearson_r, spearman_rho)) => Correlation { x, y, n, pearson_r, spearman_rho, warning: None },
        Err(e) => undefined(e.to_string()),
    }
}

/// Trains from a common initial point on every `(eta, b)` pair, samples the
/// post-training cloud, and records `R`, the box dimension (ambient
/// dimension <= 3 only), the closed-form bound (where the family has one)
/// and the generalization gap averaged over the cloud.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let train = Arc::new(cfg.train.load()?);
    let test = cfg.test.load()?;
    let problem = cfg.model.problem();
    problem.validate_for(&train)?;
    if test.d() != train.d() {
        return Err(CliError::Config(format!("train has d = {}, test has d = {}", train.d(), test.d())));
    }
    let p = problem.param_dim(train.d());
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.init_seed);
    let scale = cfg.init_scale.unwrap_or(1.0 / (train.d() as f64).sqrt());
    let w0 = DVector::from_vec(rng.normal_vec(p)) * scale;

    let grid: Vec<(usize, usize, f64)> = cfg
        .batch_sizes
        .iter()
        .flat_map(|&b| cfg.etas.iter().map(move |&eta| (b, eta)))
        .enumerate()
        .map(|(k, (b, eta))| (k, b, eta))
        .collect();
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(k, b, eta)| {
            sweep_point(cfg, &problem, &train, &test, &w0, k, b, eta).unwrap_or_else(|e| {
                warn!("sweep point eta {eta}, b {b}: {e}");
                SweepRow::failed(eta, b, e.to_string())
            })
        })
        .collect();

    let correlations = vec![
        correlate(&rows, "R", "gen_gap", |r| (r.r, r.gen_gap)),
        correlate(&rows, "R", "eta", |r| (r.r, r.eta)),
    ];
    let result = SweepResult { rows, correlations };
    write_atomic(&cfg.out_dir.join("sweep.csv"), result.rows_csv().as_bytes())?;
    write_atomic(&cfg.out_dir.join("correlations.csv"), result.correlations_csv().as_bytes())?;
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    cfg: &SweepConfig,
    problem: &Problem,
    train: &Arc<Dataset>,
    test: &Dataset,
    w0: &DVector<f64>,
    k: usize,
    b: usize,
    eta: f64,
) -> Result<SweepRow> {
    let scheme = partition_batches(train.n(), b, BatchMode::Partition, None)?;
    let system = build_sgd_ifs(problem, train, &scheme, eta)?;
    let seed = child_seed(cfg.seed, k as u64 + 1);
    let mut chain = IfsChain::new(&system, w0, seed)?;
    while chain.steps() < cfg.max_iters {
        chain.advance(cfg.check_every.min(cfg.max_iters - chain.steps()))?;
        if problem.mean_loss(chain.state(), train) < cfg.loss_threshold {
            break;
        }
    }
    let train_iters = chain.steps();
    let mut pts = Vec::with_capacity(cfg.n_samples * w0.len());
    for _ in 0..cfg.n_samples {
        chain.advance(cfg.thin)?;
        pts.extend_from_slice(chain.state().as_slice());
    }
    let cloud = SampleCloud::new(pts, w0.len(), train_iters, cfg.thin, seed)?;

    let dir = cfg.out_dir.join(format!("point_{k:03}"));
    if cfg.write_clouds {
        crate::output::write_cloud(&dir.join("cloud.csv"), &cloud)?;
    }
    let est = estimate_r(problem, train, &scheme, eta, &cloud, cfg.n_w, cfg.n_u, &cfg.power_iter)?;
    write_json(&dir.join("complexity.json"), &est)?;

    let box_dim = if cloud.dim() <= 3 {
        box_counting_dimension(&cloud, &cfg.box_count).map_or(f64::NAN, |d| d.value)
    } else {
        f64::NAN
    };
    let analytic = bound_family(problem, train, &cloud)
        .and_then(|family| BoundSpec::from_n_b(family, eta, train.n(), b).ok())
        .and_then(|spec| analytic_bound(&spec).ok())
        .unwrap_or(f64::NAN);

    let gap_rows = cloud.strided_indices(cfg.gap_points.min(cloud.len()));
    let mut gap = 0.0;
    for &i in &gap_rows {
        gap += generalization_gap(problem, train, test, &cloud.point_vec(i))?;
    }
    let last = cloud.point_vec(cloud.len() - 1);
    Ok(SweepRow {
        eta,
        batch_size: b,
        r: est.r,
        inverse_r: est.inverse_r,
        converged_fraction: est.converged_fraction,
        box_dim,
        analytic_bound: analytic,
        train_loss: problem.mean_loss(&last, train),
        test_loss: problem.mean_loss(&last, test),
        gen_gap: gap / gap_rows.len() as f64,
        train_iters,
        error: None,
    })
}

/// Closed-form bound family matching a problem, with `R` taken from the data
/// (and `C` from the cloud for the network).
fn bound_family(problem: &Problem, data: &Dataset, cloud: &SampleCloud) -> Option<BoundFamily> {
    let r = data.radius();
    Some(match problem {
        Problem::LeastSquares { lambda } => BoundFamily::LeastSquares { lambda: *lambda, r },
        Problem::Logistic { lambda } => BoundFamily::Logistic { lambda: *lambda, r },
        Problem::RobustRegression { lambda_r, t0, .. } => BoundFamily::Robust { lambda_r: *lambda_r, t0: *t0, r },
        Problem::SmoothHingeSvm { lambda, sigma } => BoundFamily::Svm { lambda: *lambda, sigma: *sigma, r },
        Problem::OneHiddenLayer(net) => {
            BoundFamily::OneHiddenLayer { lambda: net.lambda, c: compute_one_layer_c(net, data, cloud).ok()? }
        }
    })
}

/// Byte-level comparison helper used by determinism checks.
pub fn same_files(a: &Path, b: &Path) -> Result<bool> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| crate::io_error(p, e));
    Ok(read(a)? == read(b)?)
}
