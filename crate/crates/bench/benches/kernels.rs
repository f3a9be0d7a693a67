use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use ifslab_core::problems::generate_synthetic;
use ifslab_core::rng::Xoshiro256PlusPlus;
use ifslab_core::{
    box_counting_dimension, build_sgd_ifs, estimate_r, partition_batches, sample_invariant, spectral_norm_power_iter,
    Activation, BatchMode, BoxCountConfig, IfsChain, IfsSystem, OneHiddenLayer, PowerIterConfig, Problem,
    SyntheticSpec,
};
use nalgebra::DVector;

fn mlp(m: usize) -> Problem {
    let s = 1.0 / (m as f64).sqrt();
    Problem::OneHiddenLayer(OneHiddenLayer {
        lambda: 1e-4,
        output_weights: (0..m).map(|r| if r % 2 == 0 { s } else { -s }).collect(),
        activation: Activation::Tanh,
    })
}

fn kernels(c: &mut Criterion) {
    let d = 4;
    let m = 8;
    let data = Arc::new(generate_synthetic(&SyntheticSpec::MlpRegression { n: 256, d, teacher_seed: 11 }, 1).unwrap());
    let problem = mlp(m);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let w = DVector::from_vec(rng.normal_vec(d * m)) * 0.5;
    let v = DVector::from_vec(rng.normal_vec(d * m));
    let batch: Vec<usize> = (0..16).collect();

    c.bench_function("mlp_grad_b16_p32", |b| b.iter(|| problem.grad(black_box(&w), &data, &batch)));
    c.bench_function("mlp_hvp_b16_p32", |b| b.iter(|| problem.hvp(black_box(&w), &data, &batch, black_box(&v))));
    let h = problem.batch_hessian(&w, &data, &batch);
    c.bench_function("mlp_cached_hessian_apply", |b| b.iter(|| h.apply(black_box(&v))));
    c.bench_function("power_iter_mlp_jacobian", |b| {
        let cfg = PowerIterConfig { tol: 1e-8, max_iters: 2000, seed: 1 };
        b.iter(|| spectral_norm_power_iter(|x| x - h.apply(x) * 0.1, d * m, &cfg).unwrap())
    });

    let scheme = partition_batches(256, 16, BatchMode::Partition, None).unwrap();
    let system = build_sgd_ifs(&problem, &data, &scheme, 0.1).unwrap();
    c.bench_function("mlp_chain_1000_steps", |b| {
        b.iter(|| {
            let mut chain = IfsChain::new(&system, &w, 3).unwrap();
            chain.advance(1000).unwrap();
            chain.state()[0]
        })
    });

    let cloud = sample_invariant(&system, &w, 1000, 200, 5, 2).unwrap();
    c.bench_function("estimate_r_20x10", |b| {
        let cfg = PowerIterConfig { tol: 1e-8, max_iters: 2000, seed: 3 };
        b.iter(|| estimate_r(&problem, &data, &scheme, 0.1, &cloud, 20, 10, &cfg).unwrap().r)
    });

    let cantor = IfsSystem::cantor();
    c.bench_function("cantor_chain_1e5_steps", |b| {
        b.iter(|| sample_invariant(&cantor, &DVector::zeros(1), 0, 100_000, 1, 0).unwrap().len())
    });
    let cantor_cloud = sample_invariant(&cantor, &DVector::zeros(1), 1000, 200_000, 1, 0).unwrap();
    let mut group = c.benchmark_group("box_counting");
    group.sample_size(10);
    group.bench_function("cantor_2e5_points", |b| {
        b.iter(|| box_counting_dimension(&cantor_cloud, &BoxCountConfig::default()).unwrap().value)
    });
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
