//! Stage-by-stage pipeline with JSON artifacts in an output directory.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{apply_override, load_config, EvalNodes, PipelineConfig};
pub use pipeline::{
    cmd_eval, cmd_exemplars, cmd_gen_synthetic, cmd_ingest, cmd_rknn, cmd_run, cmd_summaries,
    cmd_synth, read_artifact, Dataset, OutputLock, Stage,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: missing field `{0}`")]
    MissingField(&'static str),
    #[error("missing artifact from stage `{0}`; run that stage first")]
    MissingArtifact(&'static str),
    #[error("output directory is locked by another run ({})", .0.display())]
    Locked(PathBuf),
    #[error("io: {0}")]
    Io(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}
