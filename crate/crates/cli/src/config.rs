//! JSON configuration documents. Every struct rejects unknown keys so typos
//! surface as config errors instead of silently falling back to defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ifslab_core::problems::generate_synthetic;
use ifslab_core::{
    Activation, BatchMode, BatchScheme, BoxCountConfig, Dataset, OneHiddenLayer, OptimizerConfig, OptimizerKind,
    PowerIterConfig, PreconditionerSpec, Problem, SyntheticSpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{io_error, CliError, Result};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { spec: SyntheticSpec, seed: u64 },
    Csv { path: PathBuf },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic { spec, seed } => Ok(generate_synthetic(spec, *seed)?),
            DataSource::Csv { path } => {
                if !path.exists() {
                    return Err(CliError::Config(format!("data file {} does not exist", path.display())));
                }
                Ok(Dataset::load_csv(path)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreconditionerConfig {
    pub diag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    PrecondSgd,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerName,
    pub eta: f64,
    #[serde(default)]
    pub preconditioner: Option<PreconditionerConfig>,
}

impl OptimizerSpec {
    pub fn build(&self) -> Result<OptimizerConfig> {
        let kind = match (self.kind, &self.preconditioner) {
            (OptimizerName::Sgd, _) => OptimizerKind::Sgd,
            (OptimizerName::Newton, _) => OptimizerKind::StochasticNewton,
            (OptimizerName::PrecondSgd, Some(p)) => {
                OptimizerKind::PreconditionedSgd(Arc::new(PreconditionerSpec::diagonal(&p.diag)?))
            }
            (OptimizerName::PrecondSgd, None) => {
                return Err(CliError::Config("precond_sgd needs a preconditioner".into()))
            }
        };
        Ok(OptimizerConfig { kind, eta: self.eta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    #[serde(default = "partition")]
    pub mode: BatchMode,
    pub batch_size: usize,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

fn partition() -> BatchMode {
    BatchMode::Partition
}

impl BatchSpec {
    pub fn build(&self, n: usize) -> Result<BatchScheme> {
        Ok(ifslab_core::partition_batches(n, self.batch_size, self.mode, self.shuffle_seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub burn_in: usize,
    pub n_samples: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub seed: u64,
    /// Starting point; zeros when absent.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

/// Document read by `simulate` and `complexity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub optimizer: OptimizerSpec,
    pub batch: BatchSpec,
    pub data: DataSource,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub box_count: BoxCountConfig,
    #[serde(default)]
    pub power_iter: PowerIterConfig,
    #[serde(default = "default_n_w")]
    pub n_w: usize,
    #[serde(default = "default_n_u")]
    pub n_u: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_n_w() -> usize {
    200
}

fn default_n_u() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorConfig {
    pub etas: Vec<f64>,
    #[serde(default = "cantor_samples")]
    pub n_samples: usize,
    #[serde(default = "cantor_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub box_count: BoxCountConfig,
    pub out_dir: PathBuf,
}

fn cantor_samples() -> usize {
    1_000_000
}

fn cantor_burn_in() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linreg2dConfig {
    pub etas: Vec<f64>,
    /// Seed of the five-point dataset.
    pub data_seed: u64,
    /// Seed of the batch-selection chain (shared by every step size).
    pub seed: u64,
    #[serde(default = "cantor_samples")]
    pub n_samples: usize,
    #[serde(default = "cantor_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub box_count: BoxCountConfig,
    pub out_dir: PathBuf,
}

/// Model trained in a sweep: either a one-hidden-layer network whose fixed
/// output weights alternate `+-1/sqrt(hidden)`, or any explicit problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp { hidden: usize, lambda: f64, activation: Activation },
    Explicit { problem: Problem },
}

impl ModelSpec {
    pub fn problem(&self) -> Problem {
        match self {
            ModelSpec::Mlp { hidden, lambda, activation } => {
                let scale = 1.0 / (*hidden as f64).sqrt();
                let output_weights = (0..*hidden).map(|r| if r % 2 == 0 { scale } else { -scale }).collect();
                Problem::OneHiddenLayer(OneHiddenLayer { lambda: *lambda, output_weights, activation: *activation })
            }
            ModelSpec::Explicit { problem } => problem.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub train: DataSource,
    pub test: DataSource,
    pub etas: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Standard deviation of the Gaussian initial point; `1/sqrt(d)` when absent.
    #[serde(default)]
    pub init_scale: Option<f64>,
    /// Seed of the initial point, shared by every grid point.
    pub init_seed: u64,
    /// Base seed; grid point `k` runs its chain with `child_seed(seed, k + 1)`.
    pub seed: u64,
    #[serde(default = "max_iters")]
    pub max_iters: usize,
    #[serde(default = "loss_threshold")]
    pub loss_threshold: f64,
    #[serde(default = "check_every")]
    pub check_every: usize,
    pub n_samples: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub n_w: usize,
    pub n_u: usize,
    #[serde(default = "sweep_power_iter")]
    pub power_iter: PowerIterConfig,
    /// Cloud points averaged for the generalization gap.
    #[serde(default = "gap_points")]
    pub gap_points: usize,
    #[serde(default)]
    pub box_count: BoxCountConfig,
    #[serde(default)]
    pub write_clouds: bool,
    pub out_dir: PathBuf,
}

/// The MLP Jacobian spectrum clusters near 1, so the default stopping rule
/// is far too loose there.
fn sweep_power_iter() -> PowerIterConfig {
    PowerIterConfig { tol: 1e-10, max_iters: 20_000, seed: 3 }
}

fn max_iters() -> usize {
    100_000
}

fn loss_threshold() -> f64 {
    1e-3
}

fn check_every() -> usize {
    1000
}

fn gap_points() -> usize {
    100
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.etas.is_empty() || self.batch_sizes.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if self.etas.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Config("step sizes must be > 0".into()));
        }
        if self.n_samples == 0 || self.thin == 0 || self.check_every == 0 || self.gap_points == 0 {
            return Err(CliError::Config("n_samples, thin, check_every and gap_points must be >= 1".into()));
        }
        if self.n_w > self.n_samples {
            return Err(CliError::Config("n_w exceeds n_samples".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_config_parses() {
        let text = r#"{
            "problem": {"kind": "least_squares", "lambda": 0.1},
            "optimizer": {"kind": "sgd", "eta": 0.1, "preconditioner": null},
            "batch": {"batch_size": 1},
            "data": {"synthetic": {"spec": {"kind": "uniform_lin_reg", "n": 5, "d": 2}, "seed": 1}},
            "simulation": {"burn_in": 100, "n_samples": 2000, "seed": 3}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.n_w, 200);
        assert_eq!(cfg.batch.mode, BatchMode::Partition);
        assert_eq!(cfg.box_count, BoxCountConfig::default());
        assert!(matches!(cfg.optimizer.build().unwrap().kind, OptimizerKind::Sgd));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"etas": [0.5], "out_dir": "x", "n_sample": 10}"#;
        assert!(serde_json::from_str::<CantorConfig>(text).is_err());
        let text = r#"{"kind": "sgd", "eta": 0.1, "precond": null}"#;
        assert!(serde_json::from_str::<OptimizerSpec>(text).is_err());
    }

    #[test]
    fn precond_needs_diag() {
        let spec: OptimizerSpec = serde_json::from_str(r#"{"kind": "precond_sgd", "eta": 0.1}"#).unwrap();
        assert!(spec.build().is_err());
        let spec: OptimizerSpec =
            serde_json::from_str(r#"{"kind": "precond_sgd", "eta": 0.1, "preconditioner": {"diag": [1, 2]}}"#)
                .unwrap();
        assert!(matches!(spec.build().unwrap().kind, OptimizerKind::PreconditionedSgd(_)));
    }

    #[test]
    fn mlp_model_weights() {
        let m = ModelSpec::Mlp { hidden: 4, lambda: 1e-4, activation: Activation::Tanh };
        match m.problem() {
            Problem::OneHiddenLayer(net) => assert_eq!(net.output_weights, vec![0.5, -0.5, 0.5, -0.5]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn missing_csv_is_config_error() {
        let src = DataSource::Csv { path: "/nonexistent/data.csv".into() };
        assert!(matches!(src.load(), Err(CliError::Config(_))));
    }
}
