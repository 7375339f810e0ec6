//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage, configuration, data and I/O
//! errors, 3 for numeric failures (non-finite values, divergence).

mod commands;
pub mod config;
mod tune;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{
    aggregate, cmd_bench, cmd_eval, cmd_experiment, cmd_forecast, cmd_generate, cmd_train, forecast_csv, load_dataset,
    load_model, mean_std, prepare_window, save_model, train_model, write_table_csv, ExperimentOutcome, ModelMeta,
    RunResult, TableRow, CHECKPOINT_FILE, TABLE_HEADER, TRAIN_LOG_FILE,
};
pub use config::Config;
pub use tune::{cmd_tune, grid, lattice_parameters, rank, refinement, run_trial, tune, Trial, TrialOutcome, TrialSpec};

use crate::data::{Split, SynthKind};
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "lattice-sqr", version, about = "Quantile forecasting with monotone lattice heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model; writes model.ckpt and train_log.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV file replacing the configured data source.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a checkpoint; writes report.json, picp.csv and reliability.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train and test every configured head per seed; writes results.csv.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Grid search ranked by validation CRPS then ACE; writes trials.csv.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        max_params: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Quantile forecasts from the last window of a CSV file.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        window: PathBuf,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the exploitation pass; prints JSON.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic series as CSV.
    Generate {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 5000)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the fully populated default config.
    PrintConfig,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::Diverged { .. } => 3,
        _ => 2,
    }
}

fn execute(command: Command) -> crate::Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            dataset,
            out_dir,
        } => {
            let cfg = Config::from_path(&config)?;
            let report = cmd_train(&cfg, seed, dataset.as_deref(), &out_dir)?;
            println!(
                "trained {} epochs, best epoch {:?}, best validation CRPS {:?}",
                report.logs.len(),
                report.best_epoch,
                report.best_val_crps()
            );
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            out_dir,
        } => {
            let r = cmd_eval(&checkpoint, dataset.as_deref(), split, &out_dir)?;
            println!(
                "crps {:.4} mae {:.4} rmse {:.4} ace {:.4} ss {} crossover {:.4}",
                r.crps,
                r.mae,
                r.rmse,
                r.ace,
                r.ss.map_or("-".to_string(), |v| format!("{v:.4}")),
                r.crossover_rate
            );
        }
        Command::Experiment { config, seeds, out_dir } => {
            let cfg = Config::from_path(&config)?;
            let outcome = cmd_experiment(&cfg, seeds.as_deref(), &out_dir)?;
            if let Some(e) = outcome.failure {
                return Err(e);
            }
        }
        Command::Tune {
            config,
            max_params,
            out_dir,
        } => {
            let cfg = Config::from_path(&config)?;
            let trials = cmd_tune(&cfg, max_params, &out_dir)?;
            if let Some(best) = trials.first() {
                println!("best {:?}: {:?}", best.spec, best.outcome);
            }
        }
        Command::Forecast {
            checkpoint,
            window,
            taus,
            out,
        } => {
            let batch = cmd_forecast(&checkpoint, &window, taus.as_deref())?;
            commands::emit(out.as_ref(), &forecast_csv(&batch))?;
        }
        Command::Bench {
            checkpoint,
            repeats,
            taus,
            out,
        } => {
            let r = cmd_bench(&checkpoint, repeats, taus.as_deref())?;
            commands::emit(out.as_ref(), &(serde_json::to_string_pretty(&r)? + "\n"))?;
        }
        Command::Generate { kind, length, seed, out } => cmd_generate(kind, length, seed, &out)?,
        Command::PrintConfig => print!("{}", Config::default().to_toml()?),
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 3);
        assert_eq!(
            exit_code(&Error::Diverged {
                epoch: 1,
                detail: "x".into()
            }),
            3
        );
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["lattice-sqr", "frobnicate"]), ExitCode::from(2));
        assert_eq!(run(["lattice-sqr", "train"]), ExitCode::from(2));
    }
}
