use std::path::PathBuf;
use std::process::ExitCode;

use ampa::harness::{self, Command, ExperimentConfig, Format};
use ampa::Error;
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    SeRun,
    Basin,
    Sim,
    PhaseTransition,
    NoiseCurve,
    Baseline,
    SpectralPredict,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::SeRun => "se-run",
            Cmd::Basin => "basin",
            Cmd::Sim => "sim",
            Cmd::PhaseTransition => "phase-transition",
            Cmd::NoiseCurve => "noise-curve",
            Cmd::Baseline => "baseline",
            Cmd::SpectralPredict => "spectral-predict",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

/// Phase retrieval experiments: state evolution, AMP.A simulations,
/// spectral initialization and baselines.
#[derive(Debug, Parser)]
#[command(name = "ampa", version = env!("AMPA_VERSION"))]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Cmd,

    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutFormat,

    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::new(Command::default_for(args.command.name()).expect("known command"), 0),
    };
    if cfg.command.name() != args.command.name() {
        return Err(Error::Parameter(format!(
            "config describes `{}` but `{}` was requested",
            cfg.command.name(),
            args.command.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let format = match args.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    match harness::execute(&cfg, &args.out, format, env!("AMPA_VERSION")) {
        Ok(summary) => {
            println!("{}", harness::summary_path(&args.out).display());
            log::info!("config {}", summary.config_hash);
            ExitCode::SUCCESS
        }
        Err(e @ Error::Parameter(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
