//! Command-line front end: train, encode, eval and embed.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_embed, cmd_encode, cmd_eval, cmd_train, default_diagnostics_path, load_label_pair, report_csv, report_json,
    write_label_csv, REPORT_CSV_HEADER,
};
pub use config::{DataFormat, DataSource, RunConfig, Subset};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "deephash",
    version,
    about = "Train deep hashing networks and evaluate Hamming retrieval"
)]
pub struct Cli {
    /// Seed for initialization and query/database splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-sample training phases (default 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes the weight file and diagnostics CSV.
    Train(RunConfig),
    /// Encode a dataset to a packed code file.
    Encode(RunConfig),
    /// Evaluate query codes against database codes.
    Eval(RunConfig),
    /// Write the activations of one layer as CSV.
    Embed(RunConfig),
}

impl Cli {
    /// The merged configuration: file values, then subcommand flags, then
    /// the global flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let (Command::Train(flags) | Command::Encode(flags) | Command::Eval(flags) | Command::Embed(flags)) =
            &self.command;
        let base = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| match e {
                Error::Io(io) => Error::InvalidArgument(format!("cannot read config {}: {io}", path.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(RunConfig {
            seed: self.seed,
            threads: self.threads,
            ..flags.clone()
        }))
    }
}

/// Runs a parsed command, printing the evaluation report to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    match cli.command {
        Command::Train(_) => {
            let t = cmd_train(&cfg)?;
            eprintln!(
                "trained {} iterations{}",
                t.iterations,
                if t.converged { " (dual norms converged)" } else { "" }
            );
        }
        Command::Encode(_) => {
            let codes = cmd_encode(&cfg)?;
            eprintln!("encoded {} samples to {} bits", codes.len(), codes.bits());
        }
        Command::Eval(_) => {
            let report = cmd_eval(&cfg)?;
            print!("{}", report_json(&report)?);
        }
        Command::Embed(_) => cmd_embed(&cfg)?,
    }
    Ok(())
}

/// Exit code for an error: 1 when a computation failed, 2 for bad input.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
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
    fn global_flags_and_overrides() {
        let cli = Cli::try_parse_from([
            "deephash",
            "--seed",
            "4",
            "train",
            "--hidden-dims",
            "8,4",
            "--beta",
            "2",
            "--force-subgradient",
            "--threads",
            "3",
        ])
        .unwrap();
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.threads, Some(3));
        assert_eq!(cfg.hidden_dims, Some(vec![8, 4]));
        assert_eq!(cfg.beta, Some(2.0));
        assert_eq!(cfg.force_subgradient, Some(true));
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 9, "beta": 1.5, "gamma": 0.5}"#).unwrap();
        let cli = Cli::try_parse_from([
            "deephash".into(),
            "--config".into(),
            path.into_os_string(),
            "encode".into(),
            "--gamma".into(),
            "0.25".into(),
        ])
        .unwrap();
        let cfg = cli.resolve().unwrap();
        assert_eq!((cfg.seed, cfg.beta, cfg.gamma), (Some(9), Some(1.5), Some(0.25)));
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::NotPositiveDefinite("")), 1);
        assert_eq!(
            exit_code(&Error::NonFinite {
                step: 1,
                value: f64::NAN
            }),
            1
        );
    }
}
