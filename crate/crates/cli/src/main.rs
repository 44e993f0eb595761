//! `nsdecode`: synthesize, clean, train, decode, evaluate and visualize.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use log::error;
use nsdecode::data::{Condition, Scenario};
use nsdecode::hierarchy::Scheme;

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "nsdecode", version, about = "Non-speech state detection and unit decoding for speech EEG")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Single worker, fixed reduction order.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate a synthetic dataset.
    Synth {
        /// Target directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean every recording and write the result with its stage log.
    Preprocess {
        /// Skip recordings whose input and settings are unchanged.
        #[arg(long)]
        skip_unchanged: bool,
    },
    /// Train one classifier bundle on one fold.
    Train {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, default_value = "IntraSession")]
        scenario: Scenario,
        /// Fold name or index.
        #[arg(long, default_value = "0")]
        fold: String,
        #[arg(long, default_value = "Heard")]
        condition: Condition,
    },
    /// Classify segments with a trained bundle.
    Decode {
        #[arg(long)]
        bundle: PathBuf,
        /// Segment ids; all segments when omitted.
        #[arg(long)]
        segment: Vec<String>,
    },
    /// Scheme × scenario accuracy report.
    Eval {
        /// Add published reference numbers as comparison rows.
        #[arg(long)]
        published: bool,
    },
    /// Activity-class profiles, channel maps and chunk export.
    Warp {
        /// HC bundle; trained on all segments of the condition when omitted.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value = "Heard")]
        condition: Condition,
        /// Profile length; rounded mean run length when omitted.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 20)]
        chunk: usize,
        #[arg(long)]
        svg: bool,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if let Some(e) = err.downcast_ref::<nsdecode::Error>() {
        return match e {
            e if e.is_numerical() => 3,
            nsdecode::Error::InvalidArgument(_) | nsdecode::Error::InvalidConfig(_) => 1,
            _ => 2,
        };
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
