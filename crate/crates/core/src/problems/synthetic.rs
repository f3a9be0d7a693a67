use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::loss::Activation;
use crate::error::{IfsError, Result};
use crate::rng::Xoshiro256PlusPlus;

/// Hidden width of the teacher network behind [`SyntheticSpec::MlpRegression`].
pub const TEACHER_HIDDEN: usize = 8;
/// Standard deviation of the Gaussian label noise added to teacher outputs.
pub const TEACHER_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// Features and targets i.i.d. uniform on [-1, 1].
    UniformLinReg { n: usize, d: usize },
    /// Inputs uniform on [-1, 1]^d; targets from a seeded tanh teacher with
    /// [`TEACHER_HIDDEN`] units plus N(0, [`TEACHER_NOISE`]^2) noise.
    MlpRegression { n: usize, d: usize, teacher_seed: u64 },
}

impl SyntheticSpec {
    pub fn n(&self) -> usize {
        match *self {
            SyntheticSpec::UniformLinReg { n, .. } | SyntheticSpec::MlpRegression { n, .. } => n,
        }
    }
}

/// Draws a dataset; identical `(spec, seed)` give identical data.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    match *spec {
        SyntheticSpec::UniformLinReg { n, d } => {
            check(n, d)?;
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                rows.push(DVector::from_fn(d, |_, _| rng.uniform(-1.0, 1.0)));
                ys.push(rng.uniform(-1.0, 1.0));
            }
            Dataset::new(rows, ys)
        }
        SyntheticSpec::MlpRegression { n, d, teacher_seed } => {
            check(n, d)?;
            let teacher = Teacher::new(d, teacher_seed);
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let a = DVector::from_fn(d, |_, _| rng.uniform(-1.0, 1.0));
                ys.push(teacher.predict(&a) + TEACHER_NOISE * rng.normal());
                rows.push(a);
            }
            Dataset::new(rows, ys)
        }
    }
}

fn check(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(IfsError::InvalidArgument("synthetic data needs n >= 1 and d >= 1".into()));
    }
    Ok(())
}

struct Teacher {
    hidden: Vec<DVector<f64>>,
    out: Vec<f64>,
}

impl Teacher {
    fn new(d: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let hidden = (0..TEACHER_HIDDEN)
            .map(|_| DVector::from_fn(d, |_, _| 2.0 * scale * rng.normal()))
            .collect();
        let out = (0..TEACHER_HIDDEN)
            .map(|_| rng.normal() / (TEACHER_HIDDEN as f64).sqrt())
            .collect();
        Self { hidden, out }
    }

    fn predict(&self, a: &DVector<f64>) -> f64 {
        self.hidden
            .iter()
            .zip(&self.out)
            .map(|(w, b)| b * Activation::Tanh.value(w.dot(a)))
            .sum()
    }
}
