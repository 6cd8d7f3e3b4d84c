use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oac_split::data::write_synthetic_cifar;
use oac_split::harness::{
    metrics_csv, parse_list, run_gradcheck, run_sweep, run_train, sweep_csv, write_snapshot, ExperimentConfig,
    GradcheckHook, SweepAxis, TrainOptions,
};
use oac_split::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "oac-split", version, about = "Split learning over simulated MIMO links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write per-epoch metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the final model (default: next to the CSV).
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Record elapsed milliseconds (makes the CSV run-dependent).
        #[arg(long)]
        wall_time: bool,
    },
    /// Best test accuracy across SNR or mobility values, for both activations.
    Sweep {
        #[command(subcommand)]
        axis: SweepCommand,
    },
    /// Compare over-the-air and ideal gradients, and both against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    Snr {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated dB values.
        #[arg(long, allow_hyphen_values = true)]
        snrs: String,
        #[arg(long)]
        out: PathBuf,
    },
    Rho {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated mixing factors in [0, 1].
        #[arg(long)]
        rhos: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Write a small synthetic corpus in the CIFAR-10 binary format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        per_file: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => EXIT_ABORT,
        _ => EXIT_VALIDATION,
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            snapshot,
            wall_time,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outcome = run_train(
                &cfg,
                &TrainOptions {
                    record_wall_time: wall_time,
                },
            )?;
            write(&out, &metrics_csv(&outcome.rows)?)?;
            let snap_path = snapshot.unwrap_or_else(|| out.with_extension("snapshot.json"));
            write_snapshot(&snap_path, &outcome.snapshot)?;
            if let Some(reason) = outcome.abort {
                eprintln!("training aborted: {reason}; last good model in {}", snap_path.display());
                return Ok(EXIT_ABORT);
            }
            if let Some(last) = outcome.rows.last() {
                eprintln!(
                    "epoch {}: test_acc {:.4} (best {:.4})",
                    last.epoch,
                    last.test_acc,
                    outcome.best_test_acc()
                );
            }
            Ok(0)
        }
        Command::Sweep { axis } => {
            let (axis, config, list, out) = match axis {
                SweepCommand::Snr { config, snrs, out } => (SweepAxis::Snr, config, snrs, out),
                SweepCommand::Rho { config, rhos, out } => (SweepAxis::Rho, config, rhos, out),
            };
            let cfg = ExperimentConfig::from_file(&config)?;
            let rows = run_sweep(&cfg, axis, &parse_list(&list)?)?;
            write(&out, &sweep_csv(axis, &rows)?)?;
            Ok(0)
        }
        Command::Gradcheck { config, corrupt_sign } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let report = run_gradcheck(&cfg, GradcheckHook { corrupt_sign })?;
            print!("{}", report.render());
            Ok(if report.passed { 0 } else { EXIT_GRADCHECK })
        }
        Command::Data {
            command: DataCommand::Synth { out, per_file, seed },
        } => {
            write_synthetic_cifar(&out, per_file, seed)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
