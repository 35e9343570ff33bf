use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ksm::config::{preset, read_config};
use ksm::pipeline::{run_figures, Pipeline, PipelineError, Report, Verb};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VerbArg {
    Steady,
    Orbit,
    Adjoint,
    Melnikov,
    Sweep,
    Stochastic,
    Wander,
    Oracle,
    Figures,
}

impl From<VerbArg> for Verb {
    fn from(v: VerbArg) -> Self {
        match v {
            VerbArg::Steady => Verb::Steady,
            VerbArg::Orbit => Verb::Orbit,
            VerbArg::Adjoint => Verb::Adjoint,
            VerbArg::Melnikov => Verb::Melnikov,
            VerbArg::Sweep => Verb::Sweep,
            VerbArg::Stochastic => Verb::Stochastic,
            VerbArg::Wander => Verb::Wander,
            VerbArg::Oracle => Verb::Oracle,
            VerbArg::Figures => Verb::Figures,
        }
    }
}

/// Melnikov analysis of a homoclinic orbit in the Galerkin Kuramoto-Sivashinsky model.
///
/// Data goes to CSV files in the output directory; diagnostics go to standard error.
/// Exit status: 0 success, 2 configuration error, 3 numerical failure,
/// 4 output written although a stage did not meet its tolerance.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Stage to run; earlier stages run as needed.
    verb: VerbArg,
    /// Configuration file (TOML sections domain, integration, shooting, forcing, noise, output).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in figure preset, fig1 to fig6.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Orbit cache directory, overriding the configuration.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    /// More detailed logging (repeat for trace output).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: &Cli) -> Result<Report, PipelineError> {
    let seed = std::env::var("KSM_SEED").ok();
    let verb = Verb::from(cli.verb);
    if matches!(verb, Verb::Figures) {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("ksm-out"));
        let cache = cli.cache.clone().unwrap_or_else(|| out.join("cache"));
        return run_figures(&out, &cache, seed.as_deref(), cli.threads);
    }
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => read_config(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => preset("fig1")?,
    };
    if let Some(out) = &cli.out {
        if cli.cache.is_none() && cfg.cache == cfg.directory.join("cache") {
            cfg.cache = out.join("cache");
        }
        cfg.directory = out.clone();
    }
    if let Some(cache) = &cli.cache {
        cfg.cache = cache.clone();
    }
    cfg.apply_seed_override(seed.as_deref())?;
    log::info!("{} with configuration {} (hash {})", verb.name(), cfg.label, &cfg.hash()[..16]);
    let mut p = Pipeline::new(&cfg, cli.threads)?;
    p.run(verb)?;
    Ok(p.report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                log::warn!("{w}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
