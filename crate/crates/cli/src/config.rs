//! Pipeline configuration: a JSON file plus dotted `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use xemplar_core::eval::EvalConfig;
use xemplar_core::synth::SynthConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub feature_names: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.edges,
            &mut self.features,
            &mut self.feature_names,
            &mut self.embeddings,
            &mut self.predictions,
            &mut self.split,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalNodes {
    Test,
    Val,
    /// Every node outside the train split.
    Heldout,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub balance: bool,
    pub cap: usize,
    pub nodes: EvalNodes,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let core = EvalConfig::default();
        EvalSettings {
            balance: core.balance,
            cap: core.cap,
            nodes: EvalNodes::Test,
        }
    }
}

impl EvalSettings {
    pub fn core(&self) -> EvalConfig {
        EvalConfig {
            balance: self.balance,
            cap: self.cap,
        }
    }
}

/// Parameters for `gen-synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub backbone_n: usize,
    pub num_motifs: usize,
    pub random_edge_frac: f64,
    pub noise: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            backbone_n: 300,
            num_motifs: 80,
            random_edge_frac: 0.10,
            noise: 0.05,
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_k() -> usize {
    5
}
fn default_hops() -> usize {
    2
}
fn default_target_coverage() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: Paths,
    /// Edge lines are undirected pairs rather than arcs.
    #[serde(default = "default_true")]
    pub undirected: bool,
    pub num_classes: Option<usize>,
    pub class_names: Option<Vec<String>>,
    #[serde(default = "default_k")]
    pub k: usize,
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    /// Explicit sample size; takes precedence over `theta`/`delta`.
    pub z: Option<usize>,
    #[serde(default = "default_hops")]
    pub hops: usize,
    #[serde(default = "default_target_coverage")]
    pub target_coverage: f64,
    pub budget: Option<usize>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }
        if !(self.target_coverage > 0.0 && self.target_coverage <= 1.0) {
            return bad(format!("target_coverage must lie in (0, 1], got {}", self.target_coverage));
        }
        if self.theta.is_some() != self.delta.is_some() {
            return bad("theta and delta must be given together".into());
        }
        self.synth
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Output directory; required by every stage.
    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.paths
            .output_dir
            .as_deref()
            .ok_or(CliError::MissingField("paths.output_dir"))
    }
}

/// Sets `path` (dot separated) in `root` to `raw`, read as JSON when it
/// parses and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("cannot set {key}: parent is not an object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("cannot set {key}: parent is not an object")))?
        .insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

/// Reads the config, applies overrides, and resolves relative paths
/// against the config file's directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg: PipelineConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.paths.resolve(base);
    cfg.validate()?;
    Ok(cfg)
}
