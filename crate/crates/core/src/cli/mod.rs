//! The `odflow` command line: staged runs sharing one output directory and a
//! manifest of what each stage produced.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ConfigIssue, InputPaths, RunConfig, SplitConfig};
pub use manifest::{digest_bytes, digest_file, Manifest, StageRecord, MANIFEST_FILE};
pub use stages::{Run, STAGES};

use crate::features::FeatureError;
use crate::geo::GeoError;
use crate::graphs::GraphError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::pipeline::PipelineError;
use crate::synth::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),
    #[error("missing artifact {artifact}: run stage `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("internal error: {0}")]
    Internal(String),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        Self::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Self::Internal(msg.into())
    }

    pub fn io(e: std::io::Error) -> Self {
        Self::Internal(e.to_string())
    }

    /// 1 for problems the user can fix (config, inputs, stage order), 2 for
    /// internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Internal(_) => 2,
            _ => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Numerics(_) | PipelineError::Io(_) => Self::Internal(e.to_string()),
            PipelineError::Model(ModelError::Numerics(_)) => Self::Internal(e.to_string()),
            PipelineError::NonFiniteLoss { .. } => {
                Self::User(format!("{e}; lower train.lr or check the inputs"))
            }
            _ => Self::User(e.to_string()),
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        Self::Internal(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(_) => Self::Internal(e.to_string()),
            _ => Self::User(e.to_string()),
        }
    }
}

macro_rules! user_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::User(e.to_string())
            }
        }
    )*};
}

user_errors!(GeoError, FeatureError, GraphError, ModelError);

#[derive(Debug, Parser)]
#[command(name = "odflow", version, about = "Hourly OD bike demand forecasting with multi-graph encoder-decoders")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out_dir: Option<String>,
    /// Overrides `variants`, comma separated (e.g. `X,W4,T`).
    #[arg(long, global = true, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Write per-variant prediction CSVs during `eval`.
    #[arg(long, global = true)]
    pub dump_predictions: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic city (only when no input paths are configured).
    Synth,
    /// Aggregate zones, assign stations, count hourly OD demand.
    Aggregate,
    /// Select the forecast OD set and build its seven graphs.
    Graphs,
    /// Align weather, car flow and calendar on the hour grid.
    Featurize,
    /// Train every configured variant.
    Train,
    /// Score the trained variants on the test window and every scenario.
    Eval,
    /// Render the comparison tables.
    Report,
    /// Run every stage in order.
    All,
    /// Check the configuration and print it normalized.
    Validate,
}

/// Loads the config and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(v) = &cli.variants {
        cfg.variants = v.iter().map(|s| s.trim().to_string()).collect();
    }
    if cli.dump_predictions {
        cfg.dump_predictions = true;
    }
    cfg.normalize();
    let issues = cfg.problems();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(issues))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if cli.command == Command::Validate {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let mut run = Run::open(cfg)?;
    match cli.command {
        Command::Synth => run.synth(),
        Command::Aggregate => run.aggregate(),
        Command::Graphs => run.graphs(),
        Command::Featurize => run.featurize(),
        Command::Train => run.train(),
        Command::Eval => run.eval(),
        Command::Report => {
            let text = run.report()?;
            print!("{text}");
            Ok(())
        }
        Command::All => {
            let text = run.all()?;
            print!("{text}");
            Ok(())
        }
        Command::Validate => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::user("x").exit_code(), 1);
        assert_eq!(CliError::Stale("x".into()).exit_code(), 1);
        assert_eq!(
            CliError::MissingArtifact { artifact: "a".into(), stage: "graphs".into() }.exit_code(),
            1
        );
        assert_eq!(CliError::internal("x").exit_code(), 2);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cli = Cli::try_parse_from(["odflow", "--seed", "3", "--variants", "X,W4", "train"]).unwrap();
        let cfg = load_config(&cli).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.synth.seed), (3, 3, 3));
        assert_eq!(cfg.variants, vec!["X", "W4"]);
        let bad = Cli::try_parse_from(["odflow", "--variants", "W9", "train"]).unwrap();
        let err = load_config(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("W9"), "{err}");
    }
}
