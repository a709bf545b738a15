use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uavmec_bench::run::{self, summary_table};
use uavmec_bench::{BenchError, ExperimentConfig, Result};
use uavmec_core::schemes::SchemeId;

#[derive(Parser)]
#[command(name = "uavmec", version, about = "Train, compare and inspect multi-UAV edge-computing learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one scheme and write metrics, checkpoints and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scheme: SchemeId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Train (or reuse) every configured scheme and seed and plot the curves.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint without exploration noise.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated evaluation seeds; defaults to the checkpoint's.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Replay the pinned-volume fixture and plot per-device behavior.
    Behaviors {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Supplies the `behavior` section; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            scheme,
            seed,
            out,
            threads,
            quiet,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (trained, manifest) = run::train_run(&cfg, scheme, seed, &out, threads, !quiet)?;
            if let Some(e) = trained.report.records.last().and_then(|r| r.eval.as_ref()) {
                print!("{}", summary_table(scheme, e));
            }
            println!(
                "metrics.csv sha256 {}",
                manifest.digest_of(run::METRICS_FILE).unwrap_or("-")
            );
        }
        Command::Compare {
            config,
            out,
            threads,
            quiet,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| BenchError::Config("output_dir: pass --out or set it in the config".into()))?;
            let cmp = run::compare(&cfg, &out, threads, !quiet)?;
            println!("{:<12} {:>14}", "scheme", "final energy");
            for &s in &cfg.schemes {
                let e = cmp.median_final_energy(s).unwrap_or(f64::NAN);
                println!("{:<12} {:>14.6}", s.as_str(), e);
            }
        }
        Command::Eval { checkpoint, out, seeds } => {
            let ckpt = run::load_checkpoint(&checkpoint)?;
            let summary = run::eval_run(&ckpt, seeds, &out)?;
            print!("{}", summary_table(ckpt.scheme, &summary));
        }
        Command::Behaviors { checkpoint, out, config } => {
            let ckpt = run::load_checkpoint(&checkpoint)?;
            let behavior = match config {
                Some(path) => ExperimentConfig::load(&path)?.behavior,
                None => Default::default(),
            };
            let report = run::behaviors_run(&ckpt, &behavior, &out)?;
            for (ok, line) in report.soft_checks() {
                println!("[{}] {line}", if ok { "ok" } else { "soft-fail" });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
