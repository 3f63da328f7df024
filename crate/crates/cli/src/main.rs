mod args;
mod commands;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use args::{usage, ParamArgs, SplitArg, UsageError};
use commands::Context;
use manifest::Manifest;
use table::Format;

/// Failure-risk scoring for robot-policy rollouts.
///
/// Every run writes manifest.json beside its outputs; `ruq rerun` replays it.
#[derive(Parser, Debug)]
#[command(name = "ruq", version)]
struct Cli {
    /// Seed for generation, splitting and calibration [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular outputs
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (dataset.jsonl)
    Gen {
        /// JSON generator config; omitted fields take defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write dataset.jsonl.gz instead
        #[arg(long)]
        gzip: bool,
    },
    /// Score every rollout (scores.csv: rollout_id,score,label,split)
    Score {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Fit (w, alpha, beta) by Bayesian optimization and the Youden threshold
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        #[arg(long, default_value_t = 50)]
        n_iter: usize,
        /// Calibrate on a stratified subset of this many rollouts
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
    },
    /// AUROC and thresholded metrics with a fixed threshold
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// calibration.json providing parameters and gamma*
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
        /// Trigger threshold; overrides gamma* from --calibration
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Grid over window and contrast (sweep.csv, sweep_marginals.csv)
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Axes such as "w=10..100:10" "alpha=0.1..0.9:0.1"
        #[arg(long, num_args = 1..)]
        grid: Vec<String>,
    },
    /// Replay one rollout through the streaming monitor (trace.csv)
    Monitor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rollout_id: String,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
    },
    /// Compare all score variants on the train/test split (report.csv)
    Report {
        #[arg(long)]
        data: PathBuf,
        /// Take w, alpha and beta from a calibration file
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Repeat the run recorded in a manifest
    Rerun {
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Score { .. } => "score",
            Command::Calibrate { .. } => "calibrate",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Monitor { .. } => "monitor",
            Command::Report { .. } => "report",
            Command::Rerun { .. } => "rerun",
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Rerun { manifest } = &cli.command {
        let recorded = Manifest::read(manifest).map_err(|e| usage(format!("{}: {e:#}", manifest.display())))?;
        let mut args = vec!["ruq".to_string()];
        args.extend(recorded.argv.iter().cloned());
        args.push("--out".into());
        args.push(cli.out.display().to_string());
        let replay = Cli::try_parse_from(&args).map_err(|e| usage(format!("manifest arguments: {e}")))?;
        if matches!(replay.command, Command::Rerun { .. }) {
            return Err(usage("a manifest cannot record a rerun"));
        }
        return execute(replay, recorded.argv);
    }

    std::fs::create_dir_all(&cli.out).map_err(|e| usage(format!("--out {}: {e}", cli.out.display())))?;
    let ctx = Context { out: cli.out.clone(), format: cli.format, seed: cli.seed };
    let run = match &cli.command {
        Command::Gen { config, gzip } => commands::gen(&ctx, config.as_deref(), *gzip)?,
        Command::Score { data, params } => commands::score(&ctx, data, params)?,
        Command::Calibrate { data, n_init, n_iter, subsample, split } => {
            commands::calibrate_cmd(&ctx, data, *n_init, *n_iter, *subsample, *split)?
        }
        Command::Eval { data, calibration, params, gamma, split } => {
            commands::eval(&ctx, data, calibration.as_ref(), params, *gamma, *split)?
        }
        Command::Sweep { data, grid } => commands::sweep(&ctx, data, grid)?,
        Command::Monitor { data, rollout_id, calibration, params, gamma } => {
            commands::monitor(&ctx, data, rollout_id, calibration.as_ref(), params, *gamma)?
        }
        Command::Report { data, calibration, params } => commands::report(&ctx, data, calibration.as_ref(), params)?,
        Command::Rerun { .. } => unreachable!("handled above"),
    };
    Manifest {
        tool: "ruq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command.name().into(),
        argv,
        seed: run.seed,
        format: cli.format.extension().into(),
        config: run.config,
        outputs: run.outputs,
    }
    .write(&cli.out)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("RUQ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("RUQ_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// 2 for anything the caller can fix (bad flags, config or data), 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ruq_core::Error>() {
        Some(e) if e.is_user_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv = manifest::strip_out(&std::env::args().skip(1).collect::<Vec<_>>());
    match configure_threads().and_then(|()| execute(cli, argv)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
