//! End-to-end acceptance suite. Runs every criterion in sequence (so the
//! runtime budgets are not skewed by concurrent tests), prints one PASS/FAIL
//! line per criterion, and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ifslab_cli::config::{CantorConfig, DataSource, Linreg2dConfig, ModelSpec, SweepConfig};
use ifslab_cli::experiments::{run_cantor, run_linreg2d, run_sweep, CantorOutcome, Linreg2dOutcome, SweepResult};
use ifslab_core::complexity::PowerIterConfig;
use ifslab_core::rng::Xoshiro256PlusPlus;
use ifslab_core::{
    analytic_bound, bound_corollary1, bound_theorem1, rams_ratio, sample_invariant, spectral_norm_power_iter,
    Activation, AffineMap, BoundFamily, BoundSpec, BoxCountConfig, Dataset, GeneralizationInputs, IfsError,
    IfsSystem, MapDescriptor, OneHiddenLayer, Problem, RhoKind, SyntheticSpec,
};
use nalgebra::{DMatrix, DVector};
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

// ---------------------------------------------------------------- 1, 6, 7, 8

fn cantor_config(out: &Path) -> CantorConfig {
    CantorConfig {
        etas: vec![2.0 / 3.0],
        n_samples: 1_000_000,
        burn_in: 10_000,
        seed: 0,
        box_count: BoxCountConfig::default(),
        out_dir: out.to_path_buf(),
    }
}

fn linreg_config(out: &Path) -> Linreg2dConfig {
    Linreg2dConfig {
        etas: vec![0.3, 0.5, 0.7, 0.9],
        data_seed: 0,
        seed: 0,
        n_samples: 1_000_000,
        burn_in: 10_000,
        box_count: BoxCountConfig::default(),
        out_dir: out.to_path_buf(),
    }
}

/// Two-layer tanh network (8 hidden units, d = 4) on 256 teacher-generated
/// points; 6 step sizes x 2 batch sizes.
fn sweep_config(out: &Path) -> SweepConfig {
    let teacher_seed = 11;
    SweepConfig {
        model: ModelSpec::Mlp { hidden: 8, lambda: 1e-4, activation: Activation::Tanh },
        train: DataSource::Synthetic { spec: SyntheticSpec::MlpRegression { n: 256, d: 4, teacher_seed }, seed: 1 },
        test: DataSource::Synthetic { spec: SyntheticSpec::MlpRegression { n: 2048, d: 4, teacher_seed }, seed: 2 },
        etas: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
        batch_sizes: vec![16, 32],
        init_scale: None,
        init_seed: 5,
        seed: 7,
        max_iters: 100_000,
        loss_threshold: 1e-3,
        check_every: 1000,
        n_samples: 1000,
        thin: 10,
        n_w: 20,
        n_u: 10,
        power_iter: PowerIterConfig { tol: 1e-10, max_iters: 20_000, seed: 3 },
        gap_points: 100,
        box_count: BoxCountConfig::default(),
        write_clouds: false,
        out_dir: out.to_path_buf(),
    }
}

fn criterion1(out: &Path) -> (Verdict, Vec<CantorOutcome>) {
    let t = Instant::now();
    let res = run_cantor(&cantor_config(out)).expect("cantor run");
    let elapsed = t.elapsed();
    let o = &res[0];
    let pass = (o.dimension - 0.63).abs() <= 0.07 && o.middle_third_mass < 1e-3 && within(elapsed, 30);
    let detail = format!(
        "dimension {:.4} (target 0.63 +- 0.07, fit r2 {:.4}), middle-third mass {:.1e}, {:.1}s (< 30s)",
        o.dimension,
        o.fit_r2,
        o.middle_third_mass,
        elapsed.as_secs_f64()
    );
    (verdict(pass, detail), res)
}

fn criterion6(out: &Path) -> (Verdict, Vec<Linreg2dOutcome>) {
    let t = Instant::now();
    let res = run_linreg2d(&linreg_config(out)).expect("linreg2d run");
    let elapsed = t.elapsed();
    let dims: Vec<f64> = res.iter().map(|o| o.dimension).collect();
    let all_ok = res.iter().all(|o| o.error.is_none());
    let monotone = dims.windows(2).all(|w| w[1] <= w[0]);
    let pass = all_ok && monotone && within(elapsed, 120);
    let seq: Vec<String> = dims.iter().map(|d| format!("{d:.4}")).collect();
    let detail = format!(
        "dimensions at eta 0.3/0.5/0.7/0.9 = [{}], non-increasing: {monotone}, {:.1}s (< 120s)",
        seq.join(", "),
        elapsed.as_secs_f64()
    );
    (verdict(pass, detail), res)
}

fn sweep(out: &Path) -> (SweepResult, Duration) {
    let t = Instant::now();
    let res = run_sweep(&sweep_config(out)).expect("sweep run");
    (res, t.elapsed())
}

fn criterion7(res: &SweepResult, elapsed: Duration) -> Verdict {
    let c = res.correlation("R", "eta").unwrap();
    let failed = res.rows.iter().filter(|r| r.error.is_some()).count();
    let pass = c.spearman_rho < 0.0 && within(elapsed, 600);
    verdict(
        pass,
        format!(
            "Spearman(R, eta) = {:.4} over {} points ({failed} failed), {:.1}s (< 600s)",
            c.spearman_rho,
            c.n,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion8(res: &SweepResult) -> Verdict {
    let c = res.correlation("R", "gen_gap").unwrap();
    verdict(
        c.n >= 12 && c.pearson_r > 0.0,
        format!("Pearson(R, gen_gap) = {:.4} over {} grid points (Spearman {:.4})", c.pearson_r, c.n, c.spearman_rho),
    )
}

// ---------------------------------------------------------------- 2

fn criterion2() -> Verdict {
    let t = Instant::now();
    let sys = IfsSystem::cantor();
    let cloud = sample_invariant(&sys, &DVector::zeros(1), 100, 1000, 1, 0).unwrap();
    let r = rams_ratio(&sys, &cloud, 100, &PowerIterConfig::default()).unwrap();
    let exact = 2f64.ln() / 3f64.ln();
    let err = (r.ratio - exact).abs();
    verdict(
        err <= 1e-6 && within(t.elapsed(), 1),
        format!("ratio {:.12} vs ln2/ln3 = {exact:.12}, |err| {err:.1e}", r.ratio),
    )
}

// ---------------------------------------------------------------- 3

fn is_violation<T>(r: Result<T, IfsError>) -> bool {
    matches!(r, Err(IfsError::PreconditionViolation { .. }))
}

fn criterion3() -> Verdict {
    let t = Instant::now();
    // ln(100) / ln(1 / Gamma) to 40 digits, computed with arbitrary precision.
    let reference = [
        ("LS", BoundFamily::LeastSquares { lambda: 1.0, r: 1.0 }, 0.1, 43.708_690_653_565_67),
        ("logistic", BoundFamily::Logistic { lambda: 1.0, r: 1.0 }, 0.1, 59.069_768_236_653_005),
        ("Newton", BoundFamily::Newton, 0.5, 6.643_856_189_774_724),
        (
            "precond-LS",
            BoundFamily::PrecondLeastSquares { lambda: 1.0, r: 1.0, m_low: 1.0, m_high: 2.0 },
            0.1,
            89.781_134_960_709_76,
        ),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, family, eta, want) in reference {
        let got = analytic_bound(&BoundSpec { family, eta, num_batches: 100.0 }).unwrap();
        let ok = (got - want).abs() <= 1e-3;
        pass &= ok;
        parts.push(format!("{name} {got:.4}"));
    }
    // Boundaries: the step-size conditions are strict, so eta at the bound fails
    // and the next float below passes.
    let below = |x: f64| f64::from_bits(x.to_bits() - 1);
    let boundary = [
        (BoundFamily::LeastSquares { lambda: 1.0, r: 1.0 }, 0.5),
        (BoundFamily::Logistic { lambda: 1.0, r: 1.0 }, 1.0),
        (BoundFamily::Newton, 1.0),
        (BoundFamily::PrecondLeastSquares { lambda: 1.0, r: 1.0, m_low: 1.0, m_high: 2.0 }, 0.5),
    ];
    let mut edges = 0;
    for (family, eta) in boundary {
        let at = is_violation(analytic_bound(&BoundSpec { family, eta, num_batches: 100.0 }));
        let inside = analytic_bound(&BoundSpec { family, eta: below(eta), num_batches: 100.0 }).is_ok();
        if at && inside {
            edges += 1;
        }
    }
    let ls06 = is_violation(analytic_bound(&BoundSpec {
        family: BoundFamily::LeastSquares { lambda: 1.0, r: 1.0 },
        eta: 0.6,
        num_batches: 100.0,
    }));
    pass &= edges == boundary.len() && ls06 && within(t.elapsed(), 1);
    verdict(pass, format!("{}; {edges}/4 boundaries exact, LS eta=0.6 rejected: {ls06}", parts.join(", ")))
}

// ---------------------------------------------------------------- 4

/// `Q diag(lambda) Q^T` with a random orthogonal `Q` and a top eigenvalue
/// separated from the rest (in magnitude) by `gap`.
fn random_symmetric(rng: &mut Xoshiro256PlusPlus, d: usize, gap: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let q = g.qr().q();
    let top = rng.uniform(0.5, 2.0) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
    let rest = top.abs() - gap;
    let mut eig: Vec<f64> = (0..d).map(|_| rng.uniform(-rest, rest)).collect();
    eig[0] = top;
    if d > 1 {
        eig[1] = rest * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
    }
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn criterion4() -> Verdict {
    let t = Instant::now();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for k in 0..50 {
        let d = 2 + rng.below(49);
        let gap = if k % 5 == 0 { 1e-3 } else { rng.uniform(1e-3, 0.2) };
        let m = random_symmetric(&mut rng, d, gap);
        let mut abs_eig: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).collect();
        abs_eig.sort_by(|a, b| b.total_cmp(a));
        min_gap = min_gap.min(abs_eig[0] - abs_eig[1]);
        let cfg = PowerIterConfig { tol: 1e-13, max_iters: 1_000_000, seed: k };
        let got = spectral_norm_power_iter(|v| &m * v, d, &cfg).unwrap().norm;
        worst = worst.max((got - abs_eig[0]).abs() / abs_eig[0]);
    }
    verdict(
        worst <= 1e-6 && min_gap >= 1e-3 * (1.0 - 1e-9) && within(t.elapsed(), 10),
        format!("worst relative error {worst:.2e} over 50 operators (smallest gap {min_gap:.2e}), {:.2}s", t.elapsed().as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 5

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

struct DerivativeCase {
    problem: Problem,
    data: Dataset,
    batch: Vec<usize>,
    w: DVector<f64>,
}

fn derivative_case(family: usize, rng: &mut Xoshiro256PlusPlus) -> DerivativeCase {
    let d = 1 + rng.below(5);
    let n = 1 + rng.below(8);
    let classification = matches!(family, 1 | 4);
    let rows: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| rng.uniform(-1.0, 1.0))).collect();
    let ys: Vec<f64> = (0..n)
        .map(|_| if classification { if rng.next_f64() < 0.5 { -1.0 } else { 1.0 } } else { rng.uniform(-1.0, 1.0) })
        .collect();
    let data = Dataset::new(rows, ys).unwrap();
    let lambda = rng.uniform(0.01, 1.0);
    let problem = match family {
        0 => Problem::LeastSquares { lambda: if rng.next_f64() < 0.2 { 0.0 } else { lambda } },
        1 => Problem::Logistic { lambda },
        2 => Problem::RobustRegression { lambda_r: lambda, t0: rng.uniform(2.0, 6.0), rho: RhoKind::Tukey },
        3 => Problem::RobustRegression { lambda_r: lambda, t0: rng.uniform(0.5, 3.0), rho: RhoKind::ExpSquared },
        4 => Problem::SmoothHingeSvm { lambda, sigma: rng.uniform(0.05, 1.0) },
        _ => {
            let m = 1 + rng.below(6);
            Problem::OneHiddenLayer(OneHiddenLayer {
                lambda,
                output_weights: (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                activation: if family == 5 { Activation::Tanh } else { Activation::Sigmoid },
            })
        }
    };
    let b = 1 + rng.below(n);
    let batch = rng.sample_without_replacement(n, b);
    let p = problem.param_dim(d);
    let w = DVector::from_vec(rng.normal_vec(p));
    DerivativeCase { problem, data, batch, w }
}

/// Worst (grad, hvp, symmetry) relative errors over one family.
fn derivative_errors(family: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (mut eg, mut eh, mut es) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let DerivativeCase { problem, data, batch, w } = derivative_case(family, &mut rng);
        let p = w.len();
        let f = |x: &DVector<f64>| problem.batch_loss(x, &data, &batch);
        let g = problem.grad(&w, &data, &batch);

        // Fourth-order central differences of the loss.
        let h = 1e-3;
        let fd = DVector::from_fn(p, |k, _| {
            let mut e = DVector::zeros(p);
            e[k] = h;
            (-f(&(&w + &e * 2.0)) + 8.0 * f(&(&w + &e)) - 8.0 * f(&(&w - &e)) + f(&(&w - &e * 2.0))) / (12.0 * h)
        });
        eg = eg.max(rel(&g, &fd));

        let u = DVector::from_vec(rng.normal_vec(p));
        let v = DVector::from_vec(rng.normal_vec(p));
        let hv = problem.hvp(&w, &data, &batch, &v);
        let hh = 1e-4;
        let fd_hv = (problem.grad(&(&w + &v * hh), &data, &batch) - problem.grad(&(&w - &v * hh), &data, &batch))
            / (2.0 * hh);
        eh = eh.max(rel(&hv, &fd_hv));

        let hu = problem.hvp(&w, &data, &batch, &u);
        let scale = u.norm() * hv.norm() + v.norm() * hu.norm();
        es = es.max((u.dot(&hv) - v.dot(&hu)).abs() / scale.max(1e-300));
    }
    (eg, eh, es)
}

fn criterion5() -> Verdict {
    let t = Instant::now();
    let names = ["least_squares", "logistic", "robust_tukey", "robust_exp", "svm", "mlp_tanh", "mlp_sigmoid"];
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, name) in names.iter().enumerate() {
        let (eg, eh, es) = derivative_errors(family, 100 + family as u64);
        pass &= eg <= 1e-6 && eh <= 1e-5 && es <= 1e-10;
        parts.push(format!("{name} {eg:.0e}/{eh:.0e}/{es:.0e}"));
    }
    pass &= within(t.elapsed(), 30);
    verdict(pass, format!("worst grad/hvp/symmetry errors: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- 9

fn theorem1_oracle(dim: f64, n: f64) -> f64 {
    8.0 * (dim * n.ln().powi(2) / n + 260f64.ln() / n).sqrt()
}

fn criterion9() -> Verdict {
    let t = Instant::now();
    let inputs = GeneralizationInputs::with_n(10_000);
    let thm = bound_theorem1(2.0, &inputs).unwrap();
    let maps = (0..100).map(|i| MapDescriptor::Affine(AffineMap::scalar(0.9, i as f64))).collect();
    let sys = IfsSystem::uniform(maps).unwrap();
    let cloud = sample_invariant(&sys, &DVector::zeros(1), 10, 10, 1, 0).unwrap();
    let rams = rams_ratio(&sys, &cloud, 10, &PowerIterConfig::default()).unwrap();
    let cor = bound_corollary1(&rams, &inputs).unwrap();
    let ratio = 100f64.ln() / (1.0 / 0.9f64).ln();
    let pass = (thm - 1.0590).abs() <= 1e-3
        && (cor - 4.875).abs() <= 1e-3
        && (thm - theorem1_oracle(2.0, 1e4)).abs() < 1e-12
        && (cor - theorem1_oracle(ratio, 1e4)).abs() < 1e-9
        && within(t.elapsed(), 1);
    verdict(pass, format!("theorem bound {thm:.5} (1.0590), corollary bound {cor:.5} (4.875), ratio {:.4}", rams.ratio))
}

// ---------------------------------------------------------------- 10

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion10(first: &[(&str, &Path)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for &(name, dir) in first {
        let again = TempDir::new().unwrap();
        match name {
            "cantor" => drop(run_cantor(&cantor_config(again.path())).unwrap()),
            "linreg2d" => drop(run_linreg2d(&linreg_config(again.path())).unwrap()),
            _ => drop(run_sweep(&sweep_config(again.path())).unwrap()),
        }
        let (a, b) = (dir_bytes(dir), dir_bytes(again.path()));
        let same = !a.is_empty() && a == b;
        pass &= same;
        parts.push(format!("{name}: {} files {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(pass, parts.join(", "))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };

    let cantor_dir = TempDir::new().unwrap();
    let linreg_dir = TempDir::new().unwrap();
    let sweep_dir = TempDir::new().unwrap();

    report(1, "Cantor dimension recovery", criterion1(cantor_dir.path()).0);
    report(2, "Rams ratio exactness", criterion2());
    report(3, "closed-form bound table", criterion3());
    report(4, "power iteration vs dense eigensolver", criterion4());
    report(5, "derivative checks", criterion5());
    report(6, "2-D regression dimension monotone in eta", criterion6(linreg_dir.path()).0);
    let (sweep_res, sweep_time) = sweep(sweep_dir.path());
    for r in &sweep_res.rows {
        println!(
            "    sweep eta {:.2} b {:>2}: R {:>9.2} gap {:.6} train {:.5} iters {} {}",
            r.eta,
            r.batch_size,
            r.r,
            r.gen_gap,
            r.train_loss,
            r.train_iters,
            r.error.as_deref().unwrap_or("")
        );
    }
    report(7, "R decreases with eta", criterion7(&sweep_res, sweep_time));
    report(8, "R positively correlated with gap", criterion8(&sweep_res));
    report(9, "generalization bound evaluators", criterion9());
    report(
        10,
        "determinism",
        criterion10(&[("cantor", cantor_dir.path()), ("linreg2d", linreg_dir.path()), ("sweep", sweep_dir.path())]),
    );

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
