use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchmark_core::pipeline::{Pipeline, PipelineConfig, RunOptions, StageReport, StageStatus};
use patchmark_core::Error;

/// Landmark localization pipeline on 3D facial meshes.
#[derive(Debug, Parser)]
#[command(name = "patchmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `train.alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for per-subject and per-fold work.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Comma-separated landmarks to drop from evaluation.
    #[arg(long, value_name = "NAME,...", value_delimiter = ',', global = true)]
    exclude_landmarks: Option<Vec<String>>,
    /// Surface post-processing of predictions: raw, nearest or centroid:K.
    #[arg(long, global = true)]
    postprocess: Option<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate,
    /// Register subjects, build per-fold atlases and patch tensors.
    Preprocess,
    /// Train one network per fold.
    Train,
    /// Predict validation subjects of every fold.
    Predict,
    /// Score predictions against ground truth and the atlas baseline.
    Evaluate,
    /// Run the ablation variant grid.
    Ablate,
    /// generate, preprocess, train, predict and evaluate in order.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
            Command::All => "all",
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(names) = &cli.exclude_landmarks {
        cfg.evaluate.exclude_landmarks = names.iter().map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
    }
    if let Some(p) = &cli.postprocess {
        cfg.apply_override(&format!("predict.postprocess={p}"))?;
    }
    Ok(cfg)
}

fn report(r: &StageReport) {
    let status = match r.status {
        StageStatus::Completed => "done",
        StageStatus::UpToDate => "up to date",
    };
    println!("{}: {status} ({})", r.stage, r.dir.display());
    for (k, v) in &r.summary {
        if !v.is_array() && !v.is_object() {
            println!("  {k}: {v}");
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    let pipeline = Pipeline::new(
        &cfg,
        RunOptions {
            jobs: cli.jobs,
            force: cli.force,
        },
    )?;
    match cli.command {
        Command::All => pipeline.run_all()?.iter().for_each(report),
        c => report(&pipeline.run(c.name())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
