//! `fairalloc` command-line interface.
//!
//! Exit codes: 0 success, 1 failed verification or other error, 2 invalid
//! configuration, 3 invariant failure during a run (a dump of the logged
//! rounds is written next to the outputs).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use fairalloc::engine::{Action, Variant};
use fairalloc::experiment::{
    self, InstanceSpec, MultiArmsSpec, RunConfig, RunError, SensitivitySpec,
};
use fairalloc::parallel::{self, ExecMode};
use fairalloc::verify::{Suite, CRITERIA};
use fairalloc::Error;

#[derive(Parser, Debug)]
#[command(name = "fairalloc", version, about = "Fair online allocation with paid information sources")]
struct Cli {
    /// Worker threads (falls back to FAIRALLOC_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run seeds one after another on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the learner on every seed of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce the CSV bundle behind a figure.
    Figure {
        #[arg(value_enum)]
        name: FigureName,
        /// TOML with the figure parameters (defaults are used otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long = "T")]
        horizon: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the acceptance checks and print one line per criterion.
    Verify {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Solve the offline benchmark for a configuration's instance.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Option<VariantName>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct Overrides {
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long = "T")]
    horizon: Option<u64>,
    #[arg(long)]
    variant: Option<VariantName>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FigureName {
    #[value(name = "multi_arms")]
    MultiArms,
    Sensitivity,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
enum VariantName {
    Base,
    FiniteActions,
    RatioPenalty,
    PublicContexts,
}

impl VariantName {
    fn variant(self) -> Variant {
        match self {
            VariantName::Base => Variant::Base,
            VariantName::FiniteActions => Variant::FiniteActions { actions: Action::binary() },
            VariantName::RatioPenalty => Variant::RatioPenalty,
            VariantName::PublicContexts => Variant::PublicContexts { anytime: true, cover: None },
        }
    }
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Invariant { .. } => 3,
        _ => 1,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: code_for(&e), error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Setup(inner) => code_for(inner),
            RunError::Failed { error, .. } => match error {
                Error::Config(_) | Error::Input(_) => 2,
                _ => 3,
            },
            RunError::Io(_) => 1,
        };
        Failure { code, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("FAIRALLOC_THREADS").ok().and_then(|v| v.parse().ok())
    });
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let outcome = parallel::with_threads(threads, || dispatch(cli.command, mode));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command, mode: ExecMode) -> Result<u8, Failure> {
    match command {
        Command::Run { config, overrides, out } => run(&config, overrides, out, mode),
        Command::Figure { name, config, seeds, horizon, out } => figure(name, config, seeds, horizon, &out, mode),
        Command::Verify { only } => verify(&only, mode),
        Command::Oracle { config, variant, out } => oracle(&config, variant, &out),
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(path: &Path, o: Overrides, out: Option<PathBuf>, mode: ExecMode) -> Result<u8, Failure> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = o.seeds {
        cfg.seeds = s;
    }
    if let Some(t) = o.horizon {
        cfg.horizon = t;
    }
    if let Some(v) = o.variant {
        cfg.variant = v.variant();
    }
    let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let result = experiment::execute(&cfg, &base_dir(path), &out, mode)?;
    let rates: Vec<f64> = result.seeds.iter().map(|s| s.summary.mean_utility()).collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    println!("config {}", result.config_hash);
    println!("{} seeds, T={}, mean utility per round {mean:.6}", result.seeds.len(), cfg.horizon);
    if let Some(r) = result.opt_rate {
        println!("opt rate {r:.6}");
    }
    if let Some(r) = result.static_opt_rate {
        println!("static-opt rate {r:.6}");
    }
    println!("outputs in {}", out.display());
    Ok(0)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok(toml::from_str(&text).map_err(|e| Error::config(e.to_string()))?)
}

fn figure(
    name: FigureName,
    config: Option<PathBuf>,
    seeds: Option<u64>,
    horizon: Option<u64>,
    out: &Path,
    mode: ExecMode,
) -> Result<u8, Failure> {
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    match name {
        FigureName::MultiArms => {
            let mut spec: MultiArmsSpec = match &config {
                Some(p) => read_toml(p)?,
                None => MultiArmsSpec {
                    instance: InstanceSpec::default(),
                    horizon: 100_000,
                    seeds: 20,
                    master_seed: 0,
                    points: 20,
                },
            };
            if let Some(s) = seeds {
                spec.seeds = s;
            }
            if let Some(t) = horizon {
                spec.horizon = t;
            }
            let base = config.as_deref().map(base_dir).unwrap_or_default();
            let rows = experiment::multi_arms(&spec, &base, mode)?;
            let path = out.join("multi_arms.csv");
            experiment::write_csv(&path, &rows)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        FigureName::Sensitivity => {
            let spec: SensitivitySpec = match &config {
                Some(p) => read_toml(p)?,
                None => SensitivitySpec::default(),
            };
            let rows = experiment::sensitivity(&spec, mode)?;
            let path = out.join("sensitivity.csv");
            experiment::write_csv(&path, &rows)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
    }
    Ok(0)
}

fn verify(only: &[String], mode: ExecMode) -> Result<u8, Failure> {
    for id in only {
        if !CRITERIA.contains(&id.as_str()) {
            return Err(Error::config(format!("unknown criterion '{id}'")).into());
        }
    }
    let mut suite = Suite::new(mode);
    let mut failed = 0;
    for id in CRITERIA.iter().filter(|c| only.is_empty() || only.iter().any(|o| o == *c)) {
        let r = suite.run(id);
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

fn oracle(path: &Path, variant: Option<VariantName>, out: &Path) -> Result<u8, Failure> {
    let cfg = RunConfig::load(path)?;
    let variant = variant.map(VariantName::variant).unwrap_or(cfg.variant.clone());
    let per_context = matches!(variant, Variant::PublicContexts { .. });
    let row = experiment::oracle_row(&cfg.instance, &base_dir(path), per_context)?;
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    experiment::write_oracle_rows(&out.join("oracle.csv"), std::slice::from_ref(&row))?;
    experiment::write_json(&out.join("oracle.json"), &row)?;
    println!("{}", serde_json::to_string_pretty(&row).context("serializing oracle row")?);
    Ok(0)
}
