//! Command-line front end: `stats`, `bursts`, `forecast`, `baselines`,
//! `evaluate` and `pipeline`.
//!
//! Exit status is 0 on success, 1 for invalid input or configuration and 2
//! for numerical failures. Every error message starts with the stage that
//! raised it.

mod config;
mod pipeline;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Arg, ArgAction, Command};

pub use config::{
    parse_config_text, read_config_file, resolve, ModelName, PipelineConfig, SmootherSettings, SEED_ENV,
};
pub use pipeline::{emit_plot_data, run_subcommand, Artifact, ArtifactFile, RunReport, Subcommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Stats,
    Bursts,
    Forecast,
    Baselines,
    Evaluate,
    Plot,
    Manifest,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Stats => "stats",
            Stage::Bursts => "bursts",
            Stage::Forecast => "forecast",
            Stage::Baselines => "baselines",
            Stage::Evaluate => "evaluate",
            Stage::Plot => "plot",
            Stage::Manifest => "manifest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn numerical(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Numerical => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

fn command() -> Command {
    let mut cmd = Command::new("burstcast")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Burst detection and one-week-ahead forecasting for weekly event counts")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("key = value config file, or a previous run's manifest.json"),
        );
    for key in config::KEYS {
        let mut arg = Arg::new(key.name)
            .long(key.name.replace('_', "-"))
            .value_name("VALUE")
            .global(true)
            .action(ArgAction::Set)
            .help(format!("{} [default: {}]", key.help, key.default));
        if key.name.contains('_') {
            arg = arg.alias(key.name);
        }
        if key.boolean {
            arg = arg.num_args(0..=1).default_missing_value("true");
        }
        cmd = cmd.arg(arg);
    }
    for sub in Subcommand::ALL {
        cmd = cmd.subcommand(Command::new(sub.name()).about(sub.about()));
    }
    cmd
}

/// Parse arguments, resolve the configuration and run one subcommand.
pub fn run_from_args<I, T>(args: I, seed_env: Option<String>) -> Result<RunReport, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command()
        .try_get_matches_from(args)
        .map_err(|e| CliError::validation(Stage::Config, e.to_string()))?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = Subcommand::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .expect("known subcommand");

    let file = sub
        .get_one::<String>("config")
        .map(|p| read_config_file(&PathBuf::from(p)))
        .transpose()?;
    let mut flags = BTreeMap::new();
    for key in config::KEYS {
        if let Some(v) = sub.get_one::<String>(key.name) {
            flags.insert(key.name.to_string(), v.clone());
        }
    }
    let config = PipelineConfig::from_map(resolve(file, flags, seed_env))?;
    run_subcommand(sub_cmd, &config)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // help and version are not errors
    if let Err(e) = command().try_get_matches_from(args.clone()) {
        use clap::error::ErrorKind as K;
        if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
            print!("{e}");
            return 0;
        }
    }
    match run_from_args(args, std::env::var(SEED_ENV).ok()) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for a in &report.artifacts {
                for f in &a.files {
                    println!("{}", report.output_dir.join(&f.path).display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
