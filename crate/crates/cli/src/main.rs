//! `skewfbm` batch command line.
//!
//! Exit codes: 0 success, 1 a study assertion failed (or an I/O or
//! numerical failure), 2 invalid configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] skewfbm::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use skewfbm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                E::InvalidParameter { .. }
                | E::InvalidGrid(_)
                | E::SizeGuard(_)
                | E::EmptyStudy
                | E::UnknownStudy(_)
                | E::Hypothesis(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "skewfbm",
    version,
    about = "fBm with H < 1/2: paths, local times, mollified SDEs, Girsanov densities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct Model {
    /// Hurst index in (0, 1/2).
    #[arg(long = "H", allow_negative_numbers = true)]
    hurst: Option<f64>,
    /// Dimension.
    #[arg(long = "d")]
    dim: Option<usize>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Grid steps.
    #[arg(long = "n")]
    steps: Option<usize>,
    /// Monte Carlo paths.
    #[arg(long = "N")]
    paths: Option<usize>,
    /// volterra, volterra-midpoint or cholesky.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample fBm paths and compare the sampler's covariance with the Cholesky oracle.
    SimulateFbm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
    },
    /// Smoothed local time ladder, self-similarity and moment bound.
    LocalTime {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        /// Bandwidth of the self-similarity and moment studies.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Mollified SDE: convergence ladder, Hoelder moments, compactness diagnostic.
    SolveSde {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        /// Drift weight.
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// Bandwidth of the written paths and the Hoelder and compactness studies.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Girsanov density, mean one, exponential moments and covariance test.
    Girsanov {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        /// Mollifier bandwidth of the drift.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Signed drift weight.
        #[arg(long, allow_negative_numbers = true)]
        amplitude: Option<f64>,
        /// Exponential-moment parameter.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Identity and round-trip verifier suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated groups to run.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

fn apply_common(c: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut Config, m: &Model) {
    let f = &mut cfg.fbm;
    if let Some(v) = m.hurst {
        f.hurst = v;
    }
    if let Some(v) = m.dim {
        f.dim = v;
    }
    if let Some(v) = m.horizon {
        f.horizon = v;
    }
    if let Some(v) = m.steps {
        f.steps = v;
    }
    if let Some(v) = m.paths {
        f.paths = v;
    }
    if let Some(v) = &m.method {
        f.method = v.clone();
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<commands::Status, CliError> {
    match cli.command {
        Command::SimulateFbm { common, model } => {
            let mut cfg = apply_common(&common)?;
            apply_model(&mut cfg, &model);
            commands::simulate_fbm(&cfg)
        }
        Command::LocalTime {
            common,
            model,
            epsilon,
        } => {
            let mut cfg = apply_common(&common)?;
            apply_model(&mut cfg, &model);
            set(&mut cfg.local_time.epsilon, epsilon);
            commands::local_time(&cfg)
        }
        Command::SolveSde {
            common,
            model,
            alpha,
            epsilon,
        } => {
            let mut cfg = apply_common(&common)?;
            apply_model(&mut cfg, &model);
            set(&mut cfg.sde.alpha, alpha);
            set(&mut cfg.sde.epsilon, epsilon);
            commands::solve_sde(&cfg)
        }
        Command::Girsanov {
            common,
            model,
            epsilon,
            amplitude,
            mu,
        } => {
            let mut cfg = apply_common(&common)?;
            apply_model(&mut cfg, &model);
            set(&mut cfg.girsanov.epsilon, epsilon);
            set(&mut cfg.girsanov.amplitude, amplitude);
            set(&mut cfg.girsanov.mu, mu);
            commands::girsanov(&cfg)
        }
        Command::Verify { common, only } => {
            let mut cfg = apply_common(&common)?;
            if !only.is_empty() {
                cfg.verify.only = only;
            }
            commands::verify(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // usage errors exit with 2, --help and --version with 0
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(commands::Status::Passed) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed(failures)) => {
            for f in &failures {
                eprintln!("FAILED: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
