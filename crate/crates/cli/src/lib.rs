//! `dlstf` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! error, 3 numerical failure (training divergence, failed gradient check).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;
pub mod manifest;

pub use config::RunConfig;

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(dlstf::Error),
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_numerical() => 3,
            Failure::Core(dlstf::Error::Config(_)) => 1,
            Failure::Core(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Check(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<dlstf::Error> for Failure {
    fn from(e: dlstf::Error) -> Self {
        Failure::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "dlstf", version, about = "Spatio-temporal multi-step forecasting with a bank of per-offset LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model bank and save it
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output bank file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast one block of h hours starting at a timestamp
    Forecast {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        /// Block start, e.g. 2014-01-06T00:00:00Z
        #[arg(long)]
        at: String,
        /// Write the block here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trained bank on the test range
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a reference forecaster on the test range
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        method: Method,
        /// AR order
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on random networks
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 25)]
        nets: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Write a synthetic coupled multi-station panel
    Synth {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long = "T", default_value_t = 5000)]
        t: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.8)]
        coupling: f64,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-station actual/forecast series for plotting
    Plot {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated station ids
        #[arg(long)]
        stations: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Persistence,
    Ar,
}

/// Options shared by every data-driven command. Each overrides the
/// matching config-file key.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Input CSV (`timestamp,<station ids>`)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config and exit
    #[arg(long)]
    dump_config: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Block length
    #[arg(long = "h")]
    h: Option<usize>,
    /// Input horizon
    #[arg(long)]
    ell: Option<usize>,
    /// Per-model widths, e.g. `32/64,64` (last entry repeats)
    #[arg(long)]
    widths: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    test_start: Option<String>,
    #[arg(long)]
    test_end: Option<String>,
    #[arg(long)]
    val_hours: Option<i64>,
    #[arg(long)]
    max_gap: Option<usize>,
    /// Restrict the panel to these station ids (comma-separated)
    #[arg(long = "use-stations")]
    use_stations: Option<String>,
}

impl RunArgs {
    /// File values, then flag overrides, then the seed fallback chain.
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 19] = [
            ("data", self.data.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("h", self.h.map(|v| v.to_string())),
            ("ell", self.ell.map(|v| v.to_string())),
            ("widths", self.widths.clone()),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("clip_norm", self.clip_norm.map(|v| v.to_string())),
            ("train_fraction", self.train_fraction.map(|v| v.to_string())),
            ("val_fraction", self.val_fraction.map(|v| v.to_string())),
            ("test_start", self.test_start.clone()),
            ("test_end", self.test_end.clone()),
            ("val_hours", self.val_hours.map(|v| v.to_string())),
            ("max_gap", self.max_gap.map(|v| v.to_string())),
            ("stations", self.use_stations.clone()),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v).map_err(|e| Failure::Usage(format!("--{}: {e}", key.replace('_', "-"))))?;
            }
        }
        cfg.resolve_seed(std::env::var(config::SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }
}

fn seed_fallback(flag: Option<u64>) -> Result<u64, Failure> {
    let mut cfg = RunConfig {
        seed: flag,
        ..Default::default()
    };
    cfg.resolve_seed(std::env::var(config::SEED_ENV).ok().as_deref())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    use commands as c;
    let with_config = |run: &RunArgs| -> Result<Option<RunConfig>, Failure> {
        let cfg = run.resolve()?;
        if run.dump_config {
            print!("{}", cfg.dump());
            return Ok(None);
        }
        Ok(Some(cfg))
    };
    match command {
        Command::Train { run, out } => {
            if let Some(cfg) = with_config(&run)? {
                let out = out.ok_or_else(|| Failure::Usage("train needs --out <bank>".into()))?;
                c::train(&cfg, &out)?;
            }
        }
        Command::Forecast { run, model, at, out } => {
            if let Some(cfg) = with_config(&run)? {
                c::forecast(&cfg, &model, &at, out.as_deref())?;
            }
        }
        Command::Evaluate { run, model, report } => {
            if let Some(cfg) = with_config(&run)? {
                let report = report.ok_or_else(|| Failure::Usage("evaluate needs --report <csv>".into()))?;
                c::evaluate(&cfg, &model, &report)?;
            }
        }
        Command::Baseline { run, method, order, report } => {
            if let Some(cfg) = with_config(&run)? {
                let report = report.ok_or_else(|| Failure::Usage("baseline needs --report <csv>".into()))?;
                let ar_order = (method == Method::Ar).then_some(order);
                c::baseline(&cfg, ar_order, &report)?;
            }
        }
        Command::Gradcheck { seed, nets, eps } => c::gradcheck(seed_fallback(seed)?, nets, eps)?,
        Command::Synth { n, t, seed, coupling, noise, out } => {
            let cfg = dlstf::synth::SynthConfig {
                n,
                t,
                seed: seed_fallback(seed)?,
                coupling,
                noise,
            };
            c::synth(&cfg, &out)?;
        }
        Command::Plot { run, model, stations, out } => {
            if let Some(cfg) = with_config(&run)? {
                let ids: Vec<String> = stations.split(',').map(|s| s.trim().to_string()).collect();
                c::plot(&cfg, &model, &ids, &out)?;
            }
        }
    }
    Ok(())
}
