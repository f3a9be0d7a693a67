use crate::error::{IfsError, Result};
use crate::rng::Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// `n / b` disjoint batches of size `b`.
    Partition,
    /// Any `b`-subset, drawn lazily without replacement.
    Subset,
}

/// Mini-batch enumeration `{S_i}` with selection probabilities `{p_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScheme {
    mode: BatchMode,
    n: usize,
    batch_size: usize,
    batches: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

impl BatchScheme {
    /// Explicit partition with custom probabilities.
    pub fn from_batches(n: usize, batches: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        if batches.is_empty() || batches.len() != probs.len() {
            return Err(IfsError::InvalidArgument("need one probability per batch".into()));
        }
        let b = batches[0].len();
        let mut seen = vec![false; n];
        for s in &batches {
            if s.len() != b || b == 0 {
                return Err(IfsError::InvalidArgument("batches must share a non-zero size".into()));
            }
            for &j in s {
                if j >= n || seen[j] {
                    return Err(IfsError::InvalidArgument(format!("index {j} out of range or repeated")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(IfsError::InvalidArgument("batches must cover every index".into()));
        }
        check_probs(&probs)?;
        Ok(Self { mode: BatchMode::Partition, n, batch_size: b, batches, probs })
    }

    pub fn subset(n: usize, b: usize) -> Result<Self> {
        if b == 0 || b > n {
            return Err(IfsError::InvalidArgument(format!("subset batch size {b} must be in 1..={n}")));
        }
        Ok(Self { mode: BatchMode::Subset, n, batch_size: b, batches: Vec::new(), probs: Vec::new() })
    }

    pub fn mode(&self) -> BatchMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Explicit batches; empty in subset mode.
    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `log m_b`: `log(n/b)`-style count for partitions, `log C(n, b)` for subsets.
    pub fn log_num_batches(&self) -> f64 {
        match self.mode {
            BatchMode::Partition => (self.batches.len() as f64).ln(),
            BatchMode::Subset => ln_binomial(self.n, self.batch_size),
        }
    }

    /// Draws one batch: an index into `batches()` for partitions, or fresh
    /// indices for subsets.
    pub fn draw(&self, rng: &mut Xoshiro256PlusPlus, cumulative: &[f64]) -> DrawnBatch {
        match self.mode {
            BatchMode::Partition => DrawnBatch::Index(rng.categorical(cumulative)),
            BatchMode::Subset => DrawnBatch::Indices(rng.sample_without_replacement(self.n, self.batch_size)),
        }
    }

    pub fn resolve<'a>(&'a self, drawn: &'a DrawnBatch) -> &'a [usize] {
        match drawn {
            DrawnBatch::Index(i) => &self.batches[*i],
            DrawnBatch::Indices(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DrawnBatch {
    Index(usize),
    Indices(Vec<usize>),
}

pub(crate) fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(IfsError::InvalidArgument("probability vector is empty".into()));
    }
    if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(IfsError::InvalidArgument("probabilities must lie in (0, 1]".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(IfsError::InvalidArgument(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}
