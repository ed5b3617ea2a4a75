use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mcmccoup::{execute, CliError, Experiment, ExperimentConfig, Scale};

/// Run one coupled-MCMC experiment and write its CSV artifacts.
#[derive(Debug, Parser)]
#[command(name = "mcmccoup", version)]
struct Args {
    /// Experiment name, e.g. mcmc-vs-ode or svm-convergence.
    experiment: String,
    /// Config file: JSON object, key = value lines, or a previous manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// paper or desk.
    #[arg(long)]
    scale: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicate execution.
    #[arg(long)]
    threads: Option<usize>,
    /// Extra key=value overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let experiment: Experiment = args.experiment.parse()?;
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match cfg.experiment {
        Some(e) if e != experiment => {
            return Err(CliError::validation("experiment", format!("config is for {e}, command line asks for {experiment}")))
        }
        _ => cfg.experiment = Some(experiment),
    }
    cfg.apply_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(scale) = &args.scale {
        cfg.scale = scale.parse::<Scale>()?;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(k) = args.threads {
        if k == 0 {
            eprintln!("error: invalid config: threads: must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = build_config(&args).and_then(|cfg| execute(&cfg));
    match result {
        Ok((out, paths)) => {
            println!("{}", serde_json::to_string_pretty(&out.summary).unwrap_or_default());
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
