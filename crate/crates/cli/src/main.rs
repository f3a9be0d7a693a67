use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ifslab_cli::config::{self, CantorConfig, ExperimentConfig, Linreg2dConfig, SweepConfig};
use ifslab_cli::{experiments, output, io_error, CliError, Result};
use ifslab_core::{analytic_bound, box_counting_dimension, BoundFamily, BoundSpec, BoxCountConfig, SampleCloud};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ifslab", version, about = "Stochastic optimizers as iterated function systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the invariant measure described by a config; writes samples.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-counting dimension of a samples CSV.
    Dimension {
        #[arg(long)]
        samples: PathBuf,
        /// Box-count settings; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Closed-form dimension bound.
    Bound(BoundArgs),
    /// Sample a config's cloud and estimate R on it.
    Complexity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a preset experiment.
    Experiment {
        #[arg(value_enum)]
        preset: Preset,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Cantor,
    Linreg2d,
    Sweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lsq,
    Logistic,
    Robust,
    OneLayer,
    Svm,
    PrecondLsq,
    PrecondLogistic,
    PrecondRobust,
    PrecondSvm,
    PrecondOneLayer,
    Newton,
}

#[derive(clap::Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    b: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    lambda: Option<f64>,
    /// Largest feature norm.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Curvature constant of the one-hidden-layer family.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    m_low: Option<f64>,
    #[arg(long)]
    m_high: Option<f64>,
}

impl BoundArgs {
    fn family(&self) -> Result<BoundFamily> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("--{name} is required")));
        let lambda = || need(self.lambda, "lambda");
        let r = || need(self.radius, "radius");
        let t0 = || need(self.t0, "t0");
        let sigma = || need(self.sigma, "sigma");
        let c = || need(self.c, "c");
        let m_low = || need(self.m_low, "m-low");
        let m_high = || need(self.m_high, "m-high");
        Ok(match self.kind {
            Kind::Lsq => BoundFamily::LeastSquares { lambda: lambda()?, r: r()? },
            Kind::Logistic => BoundFamily::Logistic { lambda: lambda()?, r: r()? },
            Kind::Robust => BoundFamily::Robust { lambda_r: lambda()?, t0: t0()?, r: r()? },
            Kind::OneLayer => BoundFamily::OneHiddenLayer { lambda: lambda()?, c: c()? },
            Kind::Svm => BoundFamily::Svm { lambda: lambda()?, sigma: sigma()?, r: r()? },
            Kind::PrecondLsq => {
                BoundFamily::PrecondLeastSquares { lambda: lambda()?, r: r()?, m_low: m_low()?, m_high: m_high()? }
            }
            Kind::PrecondLogistic => {
                BoundFamily::PrecondLogistic { lambda: lambda()?, r: r()?, m_low: m_low()?, m_high: m_high()? }
            }
            Kind::PrecondRobust => BoundFamily::PrecondRobust {
                lambda_r: lambda()?,
                t0: t0()?,
                r: r()?,
                m_low: m_low()?,
                m_high: m_high()?,
            },
            Kind::PrecondSvm => BoundFamily::PrecondSvm {
                lambda: lambda()?,
                sigma: sigma()?,
                r: r()?,
                m_low: m_low()?,
                m_high: m_high()?,
            },
            Kind::PrecondOneLayer => {
                BoundFamily::PrecondOneHiddenLayer { lambda: lambda()?, c: c()?, m_low: m_low()?, m_high: m_high()? }
            }
            Kind::Newton => BoundFamily::Newton,
        })
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg: ExperimentConfig = config::load(&config)?;
            let (cloud, _) = experiments::simulate(&cfg)?;
            output::write_cloud(&out.join("samples.csv"), &cloud)?;
            log::info!("wrote {} samples to {}", cloud.len(), out.display());
        }
        Command::Dimension { samples, config } => {
            let box_cfg: BoxCountConfig = match config {
                Some(p) => config::load(&p)?,
                None => BoxCountConfig::default(),
            };
            let f = std::fs::File::open(&samples).map_err(|e| io_error(&samples, e))?;
            let cloud = SampleCloud::read_csv(BufReader::new(f))?;
            print_json(&box_counting_dimension(&cloud, &box_cfg)?)?;
        }
        Command::Bound(args) => {
            let spec = BoundSpec::from_n_b(args.family()?, args.eta, args.n, args.b)?;
            let gamma = spec.contraction()?;
            print_json(&json!({ "bound": analytic_bound(&spec)?, "contraction": gamma }))?;
        }
        Command::Complexity { config } => {
            let cfg: ExperimentConfig = config::load(&config)?;
            let (cloud, data) = experiments::simulate(&cfg)?;
            let est = experiments::complexity(&cfg, &cloud, &data)?;
            if let Some(dir) = &cfg.out_dir {
                output::write_json(&dir.join("complexity.json"), &est)?;
            }
            print_json(&est)?;
        }
        Command::Experiment { preset, config } => match preset {
            Preset::Cantor => print_json(&experiments::run_cantor(&config::load::<CantorConfig>(&config)?)?)?,
            Preset::Linreg2d => print_json(&experiments::run_linreg2d(&config::load::<Linreg2dConfig>(&config)?)?)?,
            Preset::Sweep => {
                let res = experiments::run_sweep(&config::load::<SweepConfig>(&config)?)?;
                print_json(&res.correlations)?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
