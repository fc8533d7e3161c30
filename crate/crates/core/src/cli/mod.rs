//! The `motionguard` command line: file-based pipeline stages, each
//! writing its outputs and a `manifest.json` into its own directory.

mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::{execute, rerun, RerunOutcome, TraceEntry, TraceIndex, TRACE_INDEX_FILE};
pub use config::{EvalConfig, LomoConfig, RunConfig};
pub use manifest::{compare_outputs, FileDigest, OutputMismatch, RunManifest, MANIFEST_FILE};

use crate::adversarial::TrainMode;
use crate::error::Error;
use crate::labels::MotionLabel;
use crate::recipe::{Recipe, Split};

#[derive(Debug, Parser)]
#[command(
    name = "motionguard",
    version,
    about = "On-body device authentication from RSS traces"
)]
pub struct Cli {
    /// Master seed; defaults to the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory of the command.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Tiny,
    Desk,
    Paper,
}

impl Scale {
    pub fn recipe(self) -> Recipe {
        match self {
            Scale::Tiny => Recipe::tiny(),
            Scale::Desk => Recipe::default(),
            Scale::Paper => Recipe::paper_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate labeled synthetic RSS traces for every split.
    Synth(SynthArgs),
    /// Segment traces and compute propagation profiles.
    Featurize(FeaturizeArgs),
    /// Train an adversarial or baseline model.
    Train(TrainArgs),
    /// Score a checkpoint on a feature split.
    Eval(EvalArgs),
    /// Leave-one-motion-out comparison of both trainers.
    Lomo(LomoArgs),
    /// Certify the information-theoretic claims on random discrete joints.
    TheoryCheck(TheoryArgs),
    /// synth, featurize, train both modes and evaluate them.
    Pipeline(PipelineArgs),
    /// Re-run a command from its manifest and compare outputs.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Featurize(_) => "featurize",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Lomo(_) => "lomo",
            Command::TheoryCheck(_) => "theory-check",
            Command::Pipeline(_) => "pipeline",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Replaces the configured recipe sizes.
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Comma-separated controlled motions to generate.
    #[arg(long)]
    pub motions: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FeaturizeArgs {
    /// Directory written by `synth` (holds `traces.json`).
    #[arg(long)]
    pub traces: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Directory written by `featurize`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "adversarial")]
    pub mode: TrainMode,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Train only on these motions.
    #[arg(long)]
    pub motions: Option<String>,
    /// Leave this motion out of training and monitoring.
    #[arg(long)]
    pub holdout_motion: Option<MotionLabel>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Split to score; ignored with `--holdout-motion`.
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub motions: Option<String>,
    /// Score every profile of this motion across train, validation and test.
    #[arg(long)]
    pub holdout_motion: Option<MotionLabel>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LomoArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Motions taking part; at least three.
    #[arg(long)]
    pub motions: Option<String>,
    /// Hold out only this motion, under every seed.
    #[arg(long)]
    pub holdout_motion: Option<MotionLabel>,
    /// Number of seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TheoryArgs {
    #[arg(long)]
    pub instances: Option<usize>,
    /// Comma-separated list.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub max_x: Option<usize>,
    #[arg(long)]
    pub max_z: Option<usize>,
    #[arg(long)]
    pub codomain: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub motions: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// `manifest.json` of the run to repeat.
    pub manifest: PathBuf,
}

/// Failure of a command, with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Mismatch(Vec<OutputMismatch>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Mismatch(_) => "rerun-mismatch",
            CliError::Core(e) => match e {
                Error::InvalidConfig(_) | Error::Unsupported(_) | Error::SearchTooLarge { .. } => "invalid-config",
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "missing-file",
                Error::Io { .. } => "io",
                Error::Version { .. } => "schema-version",
                Error::Corrupt(_) | Error::Parse { .. } | Error::Json(_) => "corrupt-input",
                Error::NonFinite { .. } => "numerical",
                Error::Shape(_) | Error::Empty(_) | Error::TooShort { .. } | Error::UndefinedRate(_) => "invalid-data",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "invalid-config" => 3,
            "missing-file" => 4,
            "io" => 5,
            "schema-version" => 6,
            "corrupt-input" => 7,
            "numerical" => 8,
            "invalid-data" => 9,
            _ => 10,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let message = match self {
            CliError::Core(e) => e.to_string(),
            CliError::Mismatch(m) => format!("{} output(s) differ from the manifest", m.len()),
        };
        let mut v = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": message,
        });
        if let CliError::Mismatch(m) = self {
            v["mismatches"] = serde_json::to_value(m).unwrap_or_default();
        }
        v
    }
}

/// Exit code of command-line usage errors.
pub const USAGE_EXIT_CODE: u8 = 2;

/// Builds the effective configuration: file (or defaults), then `--seed`.
pub fn resolve_config(seed: Option<u64>, config: Option<&Path>) -> Result<RunConfig, Error> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Parses `args`, runs the command and reports failures as JSON on stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let v = serde_json::json!({
                "error": "usage",
                "exit_code": USAGE_EXIT_CODE,
                "message": e.to_string().trim_end(),
            });
            eprintln!("{v}");
            return ExitCode::from(USAGE_EXIT_CODE);
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            use std::io::Write;
            // a closed stdout (e.g. a pipe into `head`) is not a failure
            let _ = writeln!(
                std::io::stdout(),
                "{}",
                serde_json::to_string_pretty(&summary).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<serde_json::Value, CliError> {
    if let Command::Rerun(r) = &cli.command {
        let outcome = rerun(&r.manifest, cli.out_dir.as_deref())?;
        if !outcome.mismatches.is_empty() {
            return Err(CliError::Mismatch(outcome.mismatches));
        }
        return Ok(serde_json::to_value(&outcome).map_err(Error::from)?);
    }
    let config = resolve_config(cli.seed, cli.config.as_deref())?;
    let out_dir = cli
        .out_dir
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let manifest = execute(&cli.command, config, &out_dir)?;
    Ok(serde_json::json!({
        "command": manifest.command,
        "out_dir": manifest.out_dir,
        "outputs": manifest.outputs.iter().map(|o| &o.path).collect::<Vec<_>>(),
    }))
}
