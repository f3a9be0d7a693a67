//! Cross-checks of the matrix-free routines against dense Jacobians.

use std::sync::Arc;

use ifslab_core::rng::{cumulative, Xoshiro256PlusPlus};
use ifslab_core::*;
use nalgebra::DVector;

fn data(seed: u64, n: usize, d: usize, half_width: f64, labels: bool) -> Arc<Dataset> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let rows = (0..n).map(|_| DVector::from_fn(d, |_, _| rng.uniform(-half_width, half_width))).collect();
    let ys = (0..n)
        .map(|_| if labels { if rng.next_f64() < 0.5 { -1.0 } else { 1.0 } } else { rng.uniform(-1.0, 1.0) })
        .collect();
    Arc::new(Dataset::new(rows, ys).unwrap())
}

#[test]
fn envelopes_contain_exact_jacobian_norms() {
    let cases = [
        (Problem::LeastSquares { lambda: 0.3 }, false),
        (Problem::Logistic { lambda: 0.5 }, true),
        (Problem::RobustRegression { lambda_r: 0.5, t0: 4.0, rho: RhoKind::Tukey }, false),
        (Problem::RobustRegression { lambda_r: 0.5, t0: 4.0, rho: RhoKind::ExpSquared }, false),
        (Problem::SmoothHingeSvm { lambda: 0.3, sigma: 0.2 }, true),
    ];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    for (k, (problem, labels)) in cases.into_iter().enumerate() {
        let ds = data(k as u64, 12, 3, 0.25, labels);
        let scheme = partition_batches(12, 3, BatchMode::Partition, None).unwrap();
        let eta = 0.4;
        let env = norm_envelopes(&problem, &ds, &scheme, eta, EnvelopeOptions::default()).unwrap();
        for _ in 0..20 {
            let w = DVector::from_vec(rng.normal_vec(3)) * 3.0;
            for (batch, e) in scheme.batches().iter().zip(&env) {
                let (_, norm) = dense_jacobian_oracle(&problem, &w, &ds, batch, eta).unwrap();
                assert!(
                    e.lower - 1e-12 <= norm && norm <= e.upper + 1e-12,
                    "{problem:?}: {norm} outside [{}, {}]",
                    e.lower,
                    e.upper
                );
            }
        }
    }
}

#[test]
fn mlp_complexity_matches_dense_oracle() {
    let train = Arc::new(
        problems::generate_synthetic(&SyntheticSpec::MlpRegression { n: 32, d: 3, teacher_seed: 4 }, 1).unwrap(),
    );
    let problem = Problem::OneHiddenLayer(OneHiddenLayer {
        lambda: 0.05,
        output_weights: vec![0.8, -0.6, 0.5, -0.9],
        activation: Activation::Tanh,
    });
    let eta = 0.7;
    let scheme = partition_batches(32, 16, BatchMode::Partition, None).unwrap();
    let sys = build_sgd_ifs(&problem, &train, &scheme, eta).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let w0 = DVector::from_vec(rng.normal_vec(12));
    let cloud = sample_invariant(&sys, &w0, 500, 200, 3, 6).unwrap();

    let cfg = PowerIterConfig { tol: 1e-13, max_iters: 200_000, seed: 17 };
    let (n_w, n_u) = (10, 6);
    let est = estimate_r(&problem, &train, &scheme, eta, &cloud, n_w, n_u, &cfg).unwrap();

    // Same points and batches, dense norms.
    let mut draw = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let cum = cumulative(scheme.probs());
    let batches: Vec<_> = (0..n_u).map(|_| scheme.draw(&mut draw, &cum)).collect();
    let mut total = 0.0;
    for (i, &k) in cloud.strided_indices(n_w).iter().enumerate() {
        for (j, b) in batches.iter().enumerate() {
            let (jac, norm) = dense_jacobian_oracle(&problem, &cloud.point_vec(k), &train, scheme.resolve(b), eta).unwrap();
            let mut mags: Vec<f64> = jac.symmetric_eigenvalues().iter().map(|e| e.abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            assert!(mags[0] - mags[1] > 1e-4 * mags[0], "cell ({i}, {j}) is not well separated");
            let got = est.per_sample_lognorms[(i, j)];
            assert!((got - norm.ln()).abs() <= 1e-5 * norm.ln().abs(), "cell ({i}, {j})");
            total += norm.ln();
        }
    }
    let inverse_r = total / (n_w * n_u) as f64;
    assert!((est.inverse_r - inverse_r).abs() <= 1e-5 * inverse_r.abs());
    assert!((est.r - 1.0 / inverse_r).abs() <= 1e-5 * est.r.abs());
}

#[test]
fn newton_jacobians_are_scalar() {
    let ds = data(3, 6, 2, 1.0, false);
    let problem = Problem::LeastSquares { lambda: 0.5 };
    let scheme = partition_batches(6, 2, BatchMode::Partition, None).unwrap();
    let newton = build_stoch_newton_ifs(&problem, &ds, &scheme, 0.3).unwrap();
    let cloud = SampleCloud::new(vec![0.1, 0.2], 2, 0, 1, 0).unwrap();
    let est = estimate_r_for_system(&newton, &cloud, 1, 5, &PowerIterConfig::default()).unwrap();
    // Every Newton map has Jacobian (1 - eta) I.
    assert!((est.inverse_r - 0.7f64.ln()).abs() < 1e-12);
}
