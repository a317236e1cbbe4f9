//! Per-exemplar signature search through a feedback and refinement loop.
//!
//! The loop starts from the rule `TRUE`. Every iteration scores the current
//! rule on the train sample, asks the backend for feedback on its mistakes,
//! asks for a revised rule, and scores that rule on the validation sample.
//! It ends once validation accuracy reaches the target or the iteration cap
//! is hit, and keeps the best rule seen.

mod llm;
mod offline;
pub mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClassId, NodeId};
use crate::rules::{describe_rule, eval_rule, join_texts, validate, RuleAst, Schema, Signature};
use crate::summary::{NodeSummary, RenderOptions, SampleBundle};

pub use llm::{
    completion_text, extract_rule, llm_call, LlmBackend, LlmClient, LlmParams, RuleExtractError,
    API_KEY_ENV,
};
pub use offline::{offline_induce, OfflineBackend};
pub use prompt::{render_prompt, HistoryEntry, PromptContext, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Offline,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub max_iterations: usize,
    pub target_accuracy: f64,
    pub n_each: usize,
    pub split_ratio: f64,
    pub backend: BackendKind,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm: LlmParams,
    /// Predicate cap for the offline backend.
    pub max_terms: usize,
    pub render: RenderOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_iterations: 5,
            target_accuracy: 0.95,
            n_each: 50,
            split_ratio: 0.6,
            backend: BackendKind::Offline,
            llm_endpoint: None,
            llm_model: None,
            llm: LlmParams::default(),
            max_terms: 4,
            render: RenderOptions::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_owned()));
        if !(self.target_accuracy >= 0.0 && self.target_accuracy <= 1.0) {
            return bad("target_accuracy must lie in [0, 1]");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie in (0, 1)");
        }
        if self.n_each < 2 {
            return bad("n_each must be at least 2");
        }
        Ok(())
    }
}

/// One scored rule in a synthesis run. Record 0 is the initial `TRUE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub exemplar: NodeId,
    pub iteration: usize,
    pub rule: RuleAst,
    pub text: String,
    pub train_pos_acc: f64,
    pub train_neg_acc: f64,
    pub val_accuracy: f64,
    pub false_negatives: Vec<NodeId>,
    pub false_positives: Vec<NodeId>,
    /// Feedback on the previous rule that this iteration responded to.
    pub feedback_text: String,
    /// Why the backend's answer was rejected, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("http error: {0}")]
    Http(String),
    #[error("request timed out")]
    Timeout,
    #[error("unusable response: {0}")]
    BadResponse(String),
    #[error("backend not configured: missing {0}")]
    NotConfigured(String),
    #[error("prompt error: {0}")]
    Prompt(String),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bundle for exemplar {0} lacks positives or negatives")]
    EmptyBundle(NodeId),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("backend failed for exemplar {exemplar} after {} iterations: {source}", history.len().saturating_sub(1))]
    Backend {
        exemplar: NodeId,
        source: BackendError,
        history: Vec<IterationRecord>,
    },
}

/// What a backend sees at one step of the loop.
pub struct StepContext<'a> {
    pub bundle: &'a SampleBundle,
    /// Iteration being produced, starting at 1.
    pub iteration: usize,
    pub current: &'a RuleAst,
    pub false_negatives: &'a [&'a NodeSummary],
    pub false_positives: &'a [&'a NodeSummary],
    /// Earlier rules with their scores and feedback; for a refine request the
    /// last entry is the current rule with the feedback just received.
    pub history: &'a [HistoryEntry],
    pub target_accuracy: f64,
    pub render: RenderOptions,
}

pub trait SynthBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Critique of the current rule.
    fn feedback(&self, ctx: &StepContext<'_>) -> Result<String, BackendError>;
    /// Raw response holding a JSON object with `rules` and `interpretation`.
    fn refine(&self, ctx: &StepContext<'_>) -> Result<String, BackendError>;
    /// Merges per-exemplar texts into one class-level text.
    fn combine(&self, class_name: &str, texts: &[(NodeId, String)]) -> Result<String, BackendError>;
    fn is_offline(&self) -> bool;
}

struct Scored<'a> {
    pos_rate: Option<f64>,
    neg_rate: Option<f64>,
    false_negatives: Vec<&'a NodeSummary>,
    false_positives: Vec<&'a NodeSummary>,
}

fn rate(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| correct as f64 / total as f64)
}

fn score<'a>(rule: &RuleAst, pos: &'a [NodeSummary], neg: &'a [NodeSummary]) -> Scored<'a> {
    let false_negatives: Vec<&NodeSummary> = pos.iter().filter(|s| !eval_rule(rule, s)).collect();
    let false_positives: Vec<&NodeSummary> = neg.iter().filter(|s| eval_rule(rule, s)).collect();
    Scored {
        pos_rate: rate(pos.len() - false_negatives.len(), pos.len()),
        neg_rate: rate(neg.len() - false_positives.len(), neg.len()),
        false_negatives,
        false_positives,
    }
}

/// Balanced validation accuracy; a side with no validation nodes falls back
/// to its train rate.
fn val_accuracy(train: &Scored<'_>, val: &Scored<'_>) -> f64 {
    let pos = val.pos_rate.or(train.pos_rate).unwrap_or(0.0);
    let neg = val.neg_rate.or(train.neg_rate).unwrap_or(0.0);
    (pos + neg) / 2.0
}

struct Evaluated<'a> {
    record: IterationRecord,
    train: Scored<'a>,
}

fn evaluate<'a>(
    bundle: &'a SampleBundle,
    iteration: usize,
    rule: RuleAst,
    text: String,
    feedback_text: String,
    error: Option<String>,
) -> Evaluated<'a> {
    let train = score(&rule, &bundle.pos_train, &bundle.neg_train);
    let val = score(&rule, &bundle.pos_val, &bundle.neg_val);
    let record = IterationRecord {
        exemplar: bundle.exemplar,
        iteration,
        text,
        train_pos_acc: train.pos_rate.unwrap_or(0.0),
        train_neg_acc: train.neg_rate.unwrap_or(0.0),
        val_accuracy: val_accuracy(&train, &val),
        false_negatives: train.false_negatives.iter().map(|s| s.node_id).collect(),
        false_positives: train.false_positives.iter().map(|s| s.node_id).collect(),
        feedback_text,
        error,
        rule,
    };
    Evaluated { record, train }
}

fn step_ctx<'a>(
    bundle: &'a SampleBundle,
    iteration: usize,
    current: &'a Evaluated<'a>,
    history: &'a [HistoryEntry],
    cfg: &SynthConfig,
) -> StepContext<'a> {
    StepContext {
        bundle,
        iteration,
        current: &current.record.rule,
        false_negatives: &current.train.false_negatives,
        false_positives: &current.train.false_positives,
        history,
        target_accuracy: cfg.target_accuracy,
        render: cfg.render,
    }
}

/// Result of a synthesis run: the chosen signature and every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutcome {
    pub signature: Signature,
    pub history: Vec<IterationRecord>,
}

/// Runs the loop for one exemplar of class `class_id`.
///
/// A response that cannot be parsed or validated is recorded as a failed
/// iteration (the current rule is kept) and the next feedback reports the
/// error instead of asking the backend. A backend failure aborts the run
/// with the history so far.
pub fn synthesize_signature(
    bundle: &SampleBundle,
    class_id: ClassId,
    schema: &Schema,
    cfg: &SynthConfig,
    backend: &dyn SynthBackend,
    feature_names: Option<&[String]>,
) -> Result<SynthOutcome, SynthError> {
    cfg.validate()?;
    if (bundle.pos_train.is_empty() && bundle.pos_val.is_empty())
        || (bundle.neg_train.is_empty() && bundle.neg_val.is_empty())
    {
        return Err(SynthError::EmptyBundle(bundle.exemplar));
    }
    let start = RuleAst::Const(true);
    let start_text = describe_rule(&start, feature_names);
    let mut current = evaluate(bundle, 0, start, start_text, String::new(), None);
    let mut records: Vec<IterationRecord> = vec![current.record.clone()];
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut pending_error: Option<String> = None;
    let fail = |source, records: &[IterationRecord]| SynthError::Backend {
        exemplar: bundle.exemplar,
        source,
        history: records.to_vec(),
    };

    for t in 1..=cfg.max_iterations {
        let feedback = match pending_error.take() {
            Some(err) => format!("syntax error: {err}"),
            None => backend.feedback(&step_ctx(bundle, t, &current, &history, cfg)).map_err(|e| fail(e, &records))?,
        };
        history.push(HistoryEntry {
            formula: current.record.rule.to_string(),
            pos_acc: current.record.train_pos_acc,
            neg_acc: current.record.train_neg_acc,
            feedback: feedback.clone(),
        });
        let response = backend.refine(&step_ctx(bundle, t, &current, &history, cfg)).map_err(|e| fail(e, &records))?;

        let parsed = extract_rule(&response)
            .map_err(|e| e.to_string())
            .and_then(|(rule, text)| {
                validate(&rule, schema)
                    .map(|()| (rule, text))
                    .map_err(|e| format!("invalid rule: {e}"))
            });
        let next = match parsed {
            Ok((rule, text)) => {
                let text = if text.trim().is_empty() {
                    describe_rule(&rule, feature_names)
                } else {
                    text
                };
                evaluate(bundle, t, rule, text, feedback, None)
            }
            Err(err) => {
                log::debug!("exemplar {}: iteration {t} rejected: {err}", bundle.exemplar);
                pending_error = Some(err.clone());
                let rule = current.record.rule.clone();
                let text = current.record.text.clone();
                evaluate(bundle, t, rule, text, feedback, Some(err))
            }
        };
        records.push(next.record.clone());
        current = next;
        if current.record.error.is_none() && current.record.val_accuracy >= cfg.target_accuracy {
            break;
        }
    }

    // The starting rule only competes when every iteration was rejected.
    // max_by keeps the last of equal elements, so ties go to the later iteration.
    let produced: Vec<&IterationRecord> = records[1..].iter().filter(|r| r.error.is_none()).collect();
    let candidates = if produced.is_empty() { vec![&records[0]] } else { produced };
    let best = candidates
        .into_iter()
        .max_by(|a, b| a.val_accuracy.total_cmp(&b.val_accuracy))
        .expect("at least one candidate");
    let signature = Signature {
        exemplar: bundle.exemplar,
        class_id,
        rule: best.rule.clone(),
        text: best.text.clone(),
        val_accuracy: best.val_accuracy,
        iterations_used: records.last().map_or(0, |r| r.iteration),
    };
    Ok(SynthOutcome {
        signature,
        history: records,
    })
}

/// Class-level text from per-exemplar texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedText {
    pub text: String,
    /// True when the backend failed and the plain join was used instead.
    pub fallback: bool,
}

/// Merges per-exemplar texts. A single text is returned as is; the offline
/// backend joins with `"; or "`; a failing backend falls back to the join.
pub fn combine_text(
    backend: &dyn SynthBackend,
    texts: &[(NodeId, String)],
    class_name: &str,
) -> CombinedText {
    let plain: Vec<&str> = texts.iter().map(|(_, t)| t.as_str()).collect();
    if texts.len() == 1 || backend.is_offline() {
        return CombinedText {
            text: join_texts(&plain),
            fallback: false,
        };
    }
    match backend.combine(class_name, texts) {
        Ok(text) if !text.trim().is_empty() => CombinedText {
            text: text.trim().to_owned(),
            fallback: false,
        },
        Ok(_) => CombinedText {
            text: join_texts(&plain),
            fallback: true,
        },
        Err(e) => {
            log::warn!("combining texts for {class_name} failed, joining instead: {e}");
            CombinedText {
                text: join_texts(&plain),
                fallback: true,
            }
        }
    }
}

/// Exemplar ids that a merged text fails to mention.
pub fn audit_combined(text: &str, exemplars: &[NodeId]) -> Vec<NodeId> {
    exemplars
        .iter()
        .copied()
        .filter(|e| !text.contains(&e.to_string()))
        .collect()
}
