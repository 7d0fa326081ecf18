//! `snsqkd`: key-rate points, optimised sweeps, Monte Carlo validation and
//! finite-decoy bounds.
//!
//! Exit codes: 0 success, 1 internal failure, 2 bad configuration or
//! parameters, 3 I/O, 4 validation failure, 5 infeasible decoy data.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use snsqkd::config::{OutputFormat, RunConfig};
use snsqkd::Error;

#[derive(Parser, Debug)]
#[command(
    name = "snsqkd",
    version,
    about = "Twin-field QKD key rates with phase postselection"
)]
struct Cli {
    /// TOML run configuration; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Monte Carlo seed, overriding `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo rounds per point, overriding `mc.rounds`.
    #[arg(long, global = true)]
    rounds: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file, overriding `output.path`; standard output otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key rate and every intermediate at one point.
    Rate(PointArgs),
    /// Maximise the rate over (p, mu, delta) at one loss.
    Optimize {
        #[arg(long)]
        loss: f64,
        #[arg(long, default_value = "ps")]
        variant: String,
        /// Print every evaluation of the search.
        #[arg(long)]
        trace: bool,
    },
    /// Optimised curves over the configured loss grid.
    Sweep {
        /// Variants to sweep, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<String>,
        /// Losses in dB, replacing the configured grid.
        #[arg(long, value_delimiter = ',')]
        loss: Vec<f64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compare Monte Carlo frequencies with the analytic click model.
    Validate {
        /// Scale every analytic reference; test fixture for the failure path.
        #[arg(long, hide = true)]
        corrupt_reference: Option<f64>,
    },
    /// Finite-decoy yield bounds and the resulting phase-error bound.
    Decoy(DecoyArgs),
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Channel loss in dB.
    #[arg(long)]
    loss: f64,
    #[arg(long, default_value = "ps")]
    variant: String,
    /// Sending probability.
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    /// Signal intensity.
    #[arg(long, default_value_t = 0.22)]
    mu: f64,
    /// Sifting half-width in radians; unused by discrete-phase variants.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
}

#[derive(Args, Debug)]
struct DecoyArgs {
    /// Dataset CSV (`intensity,class,detector,gain`).
    #[arg(required_unless_present = "synthesize", conflicts_with = "synthesize")]
    dataset: Option<PathBuf>,
    /// Generate a noise-free dataset from the click model at `--loss`;
    /// `--out` then receives the dataset.
    #[arg(long, requires = "loss")]
    synthesize: bool,
    /// Intensities of the synthesised dataset.
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1,0.3")]
    intensities: Vec<f64>,
    /// Channel loss; also enables the infinite-decoy comparison.
    #[arg(long)]
    loss: Option<f64>,
    /// `ps`, `ps-m2` or `ps-m4`.
    #[arg(long, default_value = "ps")]
    variant: String,
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    #[arg(long, default_value_t = 0.22)]
    mu: f64,
    /// Sifting half-width of the data, radians.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Largest photon number per arm in the linear programs.
    #[arg(long, default_value_t = snsqkd::decoy::DEFAULT_DECOY_J_MAX)]
    j_max: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Validation(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(e) => match e {
                Error::Config(_)
                | Error::InvalidParameter { .. }
                | Error::VariantMismatch { .. }
                | Error::Parse { .. }
                | Error::IllPosedDataset(_) => 2,
                Error::Io(_) => 3,
                Error::InfeasibleLp { .. } => 5,
                _ => 1,
            },
            Failure::Validation(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Validation(n) => {
                write!(f, "validation failed: {n} check(s) outside tolerance")
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path).map_err(|e| match e {
            Error::Io(io) => Error::Io(snsqkd::error::IoError {
                kind: io.kind,
                message: format!("{}: {}", path.display(), io.message),
            }),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(rounds) = cli.rounds {
        cfg.mc.rounds = rounds;
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    if let Command::Sweep {
        format: Some(f), ..
    } = &cli.command
    {
        cfg.output.format = (*f).into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Rate(a) => commands::rate(&cfg, a.loss, &a.variant, a.p, a.mu, a.delta),
        Command::Optimize {
            loss,
            variant,
            trace,
        } => commands::optimize(&cfg, loss, &variant, trace),
        Command::Sweep { variant, loss, .. } => commands::sweep(&cfg, &variant, &loss),
        Command::Validate { corrupt_reference } => commands::validate(&cfg, corrupt_reference),
        Command::Decoy(a) => commands::decoy(
            &cfg,
            &commands::DecoyRun {
                dataset: a.dataset,
                synthesize: a.synthesize,
                intensities: a.intensities,
                loss: a.loss,
                variant: a.variant,
                p: a.p,
                mu: a.mu,
                delta: a.delta,
                j_max: a.j_max,
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
