//! Chat-completion client and the backend built on it.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::{render_combine_prompt, render_prompt, PromptContext, PromptKind};
use super::{BackendError, StepContext, SynthBackend};
use crate::graph::NodeId;
use crate::rules::{parse_rule, ParseError, RuleAst};
use crate::summary::NodeSummary;

/// Environment variable holding the bearer token for the LLM endpoint.
pub const API_KEY_ENV: &str = "XEMPLAR_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmParams {
    pub temperature: f64,
    pub timeout_secs: f64,
    pub attempts: usize,
    /// Wait before retry `i` is `backoff_secs * 2^i`.
    pub backoff_secs: f64,
    /// Minimum spacing between request starts across all threads.
    pub min_interval_secs: f64,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams {
            temperature: 0.0,
            timeout_secs: 60.0,
            attempts: 3,
            backoff_secs: 1.0,
            min_interval_secs: 0.0,
        }
    }
}

/// Pulls the first text completion out of the common chat API shapes.
pub fn completion_text(body: &Value) -> Option<String> {
    const PATHS: [&str; 5] = [
        "/choices/0/message/content",
        "/content/0/text",
        "/candidates/0/content/parts/0/text",
        "/message/content",
        "/response",
    ];
    PATHS
        .iter()
        .find_map(|p| body.pointer(p).and_then(Value::as_str))
        .map(str::to_owned)
}

/// Blocking chat client with timeout, bounded exponential-backoff retries
/// and a shared minimum spacing between requests.
pub struct LlmClient {
    endpoint: String,
    model: String,
    params: LlmParams,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    last_start: Mutex<Option<Instant>>,
}

impl LlmClient {
    pub fn new(endpoint: &str, model: &str, params: LlmParams) -> Result<Self, BackendError> {
        if endpoint.is_empty() {
            return Err(BackendError::NotConfigured("llm_endpoint".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(params.timeout_secs))
            .build()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        Ok(LlmClient {
            endpoint: endpoint.to_owned(),
            model: model.to_owned(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            params,
            http,
            last_start: Mutex::new(None),
        })
    }

    fn pace(&self) {
        let gap = Duration::from_secs_f64(self.params.min_interval_secs);
        let mut last = self.last_start.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let ready = prev + gap;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, prompt: &str) -> Result<String, BackendError> {
        self.pace();
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.params.temperature,
        });
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Http(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Http(format!("status {status}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        completion_text(&value)
            .ok_or_else(|| BackendError::BadResponse("no text completion in response".into()))
    }

    /// Sends one prompt, retrying failed attempts.
    pub fn call(&self, prompt: &str) -> Result<String, BackendError> {
        let attempts = self.params.attempts.max(1);
        let mut last_err = BackendError::Http("no attempt made".into());
        for i in 0..attempts {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("llm call attempt {} of {attempts} failed: {e}", i + 1);
                    last_err = e;
                }
            }
            if i + 1 < attempts {
                thread::sleep(Duration::from_secs_f64(
                    self.params.backoff_secs * f64::from(1u32 << i.min(16)),
                ));
            }
        }
        Err(last_err)
    }
}

/// One-off request through a fresh [`LlmClient`].
pub fn llm_call(
    endpoint: &str,
    model: &str,
    prompt: &str,
    params: &LlmParams,
) -> Result<String, BackendError> {
    LlmClient::new(endpoint, model, params.clone())?.call(prompt)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleExtractError {
    #[error("no JSON object found in the response")]
    NoJson,
    #[error("response JSON has no usable \"rules\" entry")]
    MissingRules,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Byte ranges of balanced `{...}` spans, skipping braces inside strings.
fn json_object_spans(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    (0..bytes.len()).filter(|&i| bytes[i] == b'{').filter_map(move |start| {
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..=j]);
                    }
                }
                _ => {}
            }
        }
        None
    })
}

fn rule_strings(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .filter_map(|item| match item {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => o.get("rule").and_then(Value::as_str).map(str::to_owned),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Finds the first balanced JSON object in `response` and reads its
/// `"rules"` (joined with AND when there are several) and
/// `"interpretation"`.
pub fn extract_rule(response: &str) -> Result<(RuleAst, String), RuleExtractError> {
    let obj = json_object_spans(response)
        .find_map(|span| serde_json::from_str::<Value>(span).ok().filter(Value::is_object))
        .ok_or(RuleExtractError::NoJson)?;
    let rules = obj.get("rules").map(rule_strings).unwrap_or_default();
    let mut parsed = rules.iter().map(|r| parse_rule(r));
    let first = parsed.next().ok_or(RuleExtractError::MissingRules)??;
    let rule = parsed.try_fold(first, |acc, r| r.map(|r| RuleAst::and(acc, r)))?;
    let text = obj
        .get("interpretation")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    Ok((rule, text))
}

/// Backend that sends the rendered prompts to a chat endpoint.
pub struct LlmBackend {
    client: LlmClient,
    feature_names: Option<Vec<String>>,
}

impl LlmBackend {
    pub fn new(client: LlmClient, feature_names: Option<Vec<String>>) -> Self {
        LlmBackend {
            client,
            feature_names,
        }
    }

    fn query_prompt(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        let b = ctx.bundle;
        let pos: Vec<&NodeSummary> = b.pos_train.iter().collect();
        let neg: Vec<&NodeSummary> = b.neg_train.iter().collect();
        let pctx = PromptContext {
            exemplar: Some(&b.exemplar_summary),
            positives: &pos,
            negatives: &neg,
            feature_names: self.feature_names.as_deref(),
            render: ctx.render,
            ..PromptContext::default()
        };
        render_prompt(PromptKind::Query, &pctx).map_err(|e| BackendError::Prompt(e.to_string()))
    }

    fn send(&self, ctx: &StepContext<'_>, kind: PromptKind) -> Result<String, BackendError> {
        let pctx = PromptContext {
            current_rule: Some(ctx.current),
            false_negatives: ctx.false_negatives,
            false_positives: ctx.false_positives,
            history: ctx.history,
            target_accuracy: Some(ctx.target_accuracy),
            feature_names: self.feature_names.as_deref(),
            render: ctx.render,
            ..PromptContext::default()
        };
        let step = render_prompt(kind, &pctx).map_err(|e| BackendError::Prompt(e.to_string()))?;
        self.client.call(&format!("{}\n{step}", self.query_prompt(ctx)?))
    }
}

impl SynthBackend for LlmBackend {
    fn name(&self) -> &str {
        "llm"
    }

    fn feedback(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        self.send(ctx, PromptKind::Feedback)
    }

    fn refine(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        self.send(ctx, PromptKind::Refine)
    }

    fn combine(&self, class_name: &str, texts: &[(NodeId, String)]) -> Result<String, BackendError> {
        self.client.call(&render_combine_prompt(class_name, texts))
    }

    fn is_offline(&self) -> bool {
        false
    }
}
