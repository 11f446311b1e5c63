//! Thin command-line front end; all logic lives in the library.
//!
//! Set `DUALVAE_LOG` (error|warn|info|debug|trace) for log verbosity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualvae::commands::{self, ExitKind};
use dualvae::config::load_run_config;

#[derive(Parser)]
#[command(
    name = "dualvae",
    about = "Dual-encoder weighted-KL sequential VAE: corpus generation, training, evaluation, sweeps, conversion, verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// Run-configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name ("paper-dims" or "tiny"); overrides the file's preset.
    #[arg(long)]
    preset: Option<String>,
    /// Seed override (replaces the training and protocol seeds).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus: feature files, manifests, truth sidecar.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Reuse a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model on the configured data source.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate EER per representation and language on a test manifest.
    Eval {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test manifest (TSV).
        #[arg(long)]
        manifest: PathBuf,
        /// Optional directory for eval.tsv / eval.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Protocol seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate every cell of the configured weight grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Convert: content of --source with the speaker of --target.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Output feature file.
        #[arg(long)]
        out_file: PathBuf,
    },
    /// Run a verification suite: gradients | kl | mi-bound | eer-oracle.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn run() -> Result<(), commands::CommandError> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { cfg, out, force } => {
            let cfg = load_run_config(cfg.config.as_deref(), cfg.preset.as_deref(), cfg.seed)?;
            let summary = commands::gen_data(&cfg, &out, force)?;
            println!(
                "wrote {} utterances from {} speakers ({} frames) to {}",
                summary.utterances,
                summary.speakers,
                summary.total_frames,
                summary.out_dir.display()
            );
            Ok(())
        }
        Command::Train {
            cfg,
            out,
            force,
            resume,
        } => {
            let cfg = load_run_config(cfg.config.as_deref(), cfg.preset.as_deref(), cfg.seed)?;
            let outcome = commands::train_cmd(&cfg, &out, force, resume.as_deref())?;
            match &outcome.halted {
                Some(reason) => {
                    return Err(commands::CommandError::runtime(format!(
                        "training halted: {reason}; last good checkpoint at {}",
                        outcome.final_checkpoint.display()
                    )));
                }
                None => println!(
                    "trained {} steps; checkpoint {}",
                    outcome.steps_run,
                    outcome.final_checkpoint.display()
                ),
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
            seed,
        } => {
            let report = commands::eval_cmd(&checkpoint, &manifest, out.as_deref(), seed)?;
            print!("{}", report.to_tsv());
            Ok(())
        }
        Command::Sweep { cfg, out, force } => {
            let cfg = load_run_config(cfg.config.as_deref(), cfg.preset.as_deref(), cfg.seed)?;
            let outcome = commands::sweep_cmd(&cfg, &out, force)?;
            print!("{}", outcome.table.to_tsv());
            println!(
                "trend verdicts: z_c nondecreasing in beta_c = {}; opposite trends along beta_s = {}",
                outcome.verdicts.content_eer_nondecreasing_in_beta_c,
                outcome.verdicts.beta_s_opposite_trends
            );
            if let Some(probe) = &outcome.probe {
                println!(
                    "conversion probe at best cell: intra {:.3} ({} pairs), cross {:.3} ({} pairs)",
                    probe.intra_score, probe.n_intra, probe.cross_score, probe.n_cross
                );
            }
            Ok(())
        }
        Command::Convert {
            checkpoint,
            source,
            target,
            out_file,
        } => {
            commands::convert_cmd(&checkpoint, &source, &target, &out_file)?;
            println!("wrote {}", out_file.display());
            Ok(())
        }
        Command::Verify { suite, seed } => {
            let results = commands::verify_cmd(&suite, seed)?;
            match commands::report_checks(&results) {
                ExitKind::Success => Ok(()),
                _ => Err(commands::CommandError::runtime(format!(
                    "verify {suite}: {} of {} checks failed",
                    results.iter().filter(|r| !r.passed).count(),
                    results.len()
                ))),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DUALVAE_LOG")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
