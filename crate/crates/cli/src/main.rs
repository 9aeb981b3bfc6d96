use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slac_core::harness::{presets, run, Ablations, ExperimentConfig, Overrides, Stage};
use slac_core::SlacError;

/// Latent-action pretraining and factored SAC on the particle food-poison world.
///
/// Exit codes: 0 success, 1 usage or I/O error, 2 configuration error,
/// 3 numerical failure, 4 compatibility refusal.
#[derive(Parser)]
#[command(name = "slac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the latent-action decoder in the sim world.
    Stage1(RunArgs),
    /// Learn the task policy over a frozen decoder in the real world.
    Stage2(RunArgs),
    /// Train the flat low-level SAC baseline in the real world.
    Baseline(RunArgs),
    /// Greedy evaluation of a saved task or flat policy.
    Eval(RunArgs),
    /// Check the critic decomposition against tabular oracles.
    Oracle(RunArgs),
    /// Print the built-in experiment presets.
    ListConfigs,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file, or `preset:NAME` for a built-in preset.
    #[arg(long)]
    config: Option<String>,
    /// Overrides `seed` (and SLAC_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `outdir` (and SLAC_OUTDIR).
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    no_disentangle: bool,
    #[arg(long)]
    no_decomp: bool,
    #[arg(long)]
    no_temporal: bool,
}

fn load(source: Option<&str>) -> Result<ExperimentConfig, SlacError> {
    match source {
        None => Ok(ExperimentConfig::default()),
        Some(s) => match s.strip_prefix("preset:") {
            Some(name) => {
                let text = presets::get(name).ok_or_else(|| {
                    SlacError::config(format!("unknown preset `{name}`; see `slac list-configs`"))
                })?;
                ExperimentConfig::parse(text).map_err(|e| SlacError::config(format!("preset {name}: {e}")))
            }
            None => ExperimentConfig::load(std::path::Path::new(s)),
        },
    }
}

fn execute(stage: Stage, args: RunArgs) -> Result<(), SlacError> {
    let cli = Overrides {
        stage: Some(stage),
        seed: args.seed,
        outdir: args.outdir,
        ablation: Ablations {
            no_disentangle: args.no_disentangle,
            no_decomp: args.no_decomp,
            no_temporal: args.no_temporal,
        },
    };
    let overrides = Overrides::from_env()?.then(cli);
    let config = load(args.config.as_deref())?.resolve(&overrides)?;
    let report = run(&config)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary).expect("summaries serialize")
    );
    eprintln!("artifacts in {}", report.outdir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Stage1(a) => execute(Stage::Stage1, a),
        Command::Stage2(a) => execute(Stage::Stage2, a),
        Command::Baseline(a) => execute(Stage::Baseline, a),
        Command::Eval(a) => execute(Stage::Eval, a),
        Command::Oracle(a) => execute(Stage::Oracle, a),
        Command::ListConfigs => {
            for (name, description, _) in presets::PRESETS {
                println!("{name:<24} {description}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
