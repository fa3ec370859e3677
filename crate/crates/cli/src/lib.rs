//! Command implementations behind the `bezlane` binary.
//!
//! Each command reads its inputs, fans per-image work out over a thread
//! pool, and writes outputs sorted by image key, so results do not depend
//! on the number of threads.

mod commands;
pub mod config;
mod input;
pub mod synth;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use commands::{cmd_augment, cmd_eval, cmd_fit, cmd_match, cmd_sample};
pub use config::{InputFormat, Metric, Overrides, Param, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<bezlane::Error> for CliError {
    fn from(e: bezlane::Error) -> Self {
        match e {
            bezlane::Error::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// Result of a completed command: the text report and the exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub report: String,
    pub exit_code: i32,
}

#[derive(Debug, Parser)]
#[command(
    name = "bezlane",
    version,
    about = "Fit, augment, match and evaluate Bézier lane labels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit cubic Bézier labels to lane annotations.
    Fit(Overrides),
    /// Score predictions against ground truth.
    Eval(Overrides),
    /// Match predicted curves to labels and report the loss terms.
    Match(Overrides),
    /// Apply random affine augmentation to a label file.
    Augment(Overrides),
    /// Dump sampled curve points of a label file as CSV.
    Sample(Overrides),
}

impl Command {
    pub fn overrides(&self) -> &Overrides {
        match self {
            Command::Fit(o)
            | Command::Eval(o)
            | Command::Match(o)
            | Command::Augment(o)
            | Command::Sample(o) => o,
        }
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<Outcome, CliError> {
        match self {
            Command::Fit(_) => cmd_fit(cfg),
            Command::Eval(_) => cmd_eval(cfg),
            Command::Match(_) => cmd_match(cfg),
            Command::Augment(_) => cmd_augment(cfg),
            Command::Sample(_) => cmd_sample(cfg),
        }
    }
}

/// Parses `args`, runs the command and returns the exit code, printing the
/// report to stdout and errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = cli
        .command
        .overrides()
        .resolve()
        .and_then(|cfg| cli.command.run(&cfg));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
