use std::sync::Mutex;

use xemplar_core::graph::NodeId;
use xemplar_core::rules::{eval_rule, Schema};
use xemplar_core::summary::{NodeSummary, RenderOptions, SampleBundle};
use xemplar_core::synth::{
    synthesize_signature, BackendError, OfflineBackend, StepContext, SynthBackend, SynthConfig, SynthError,
};

fn node(id: NodeId, f0: f64, f1: f64) -> NodeSummary {
    NodeSummary {
        node_id: id,
        features: vec![f0, f1],
        hops: vec![],
        reference_exemplar: 0,
        degree: 2,
    }
}

fn bundle(pos: &[(f64, f64)], neg: &[(f64, f64)]) -> SampleBundle {
    let mk = |vals: &[(f64, f64)], base: usize| -> Vec<NodeSummary> {
        vals.iter().enumerate().map(|(i, &(a, b))| node(base + i, a, b)).collect()
    };
    let pos = mk(pos, 100);
    let neg = mk(neg, 200);
    let (pt, pv) = pos.split_at(pos.len() * 3 / 5);
    let (nt, nv) = neg.split_at(neg.len() * 3 / 5);
    SampleBundle {
        exemplar: 0,
        exemplar_summary: node(0, 1.0, 0.0),
        pos_train: pt.to_vec(),
        pos_val: pv.to_vec(),
        neg_train: nt.to_vec(),
        neg_val: nv.to_vec(),
        seed: 0,
    }
}

const SCHEMA: Schema = Schema {
    num_features: 2,
    hops: 2,
    num_classes: 3,
};

fn separable() -> SampleBundle {
    bundle(&[(1.0, 0.0); 10], &[(0.0, 0.0); 10])
}

#[test]
fn separable_bundle_is_solved_in_one_iteration() {
    let b = separable();
    let out = synthesize_signature(&b, 1, &SCHEMA, &SynthConfig::default(), &OfflineBackend::new(4, None), None).unwrap();
    assert_eq!(out.signature.rule.to_string(), "feat[0] >= 0.5");
    assert_eq!(out.signature.val_accuracy, 1.0);
    assert!(out.signature.iterations_used <= 2);
    for s in b.pos_train.iter().chain(&b.pos_val) {
        assert!(eval_rule(&out.signature.rule, s));
    }
    for s in b.neg_train.iter().chain(&b.neg_val) {
        assert!(!eval_rule(&out.signature.rule, s));
    }
    assert_eq!(out.history[0].rule.to_string(), "TRUE");
    assert_eq!(out.history[0].iteration, 0);
}

#[test]
fn identical_sides_exhaust_iterations() {
    let b = bundle(&[(1.0, 2.0); 10], &[(1.0, 2.0); 10]);
    let cfg = SynthConfig::default();
    let out = synthesize_signature(&b, 1, &SCHEMA, &cfg, &OfflineBackend::new(4, None), None).unwrap();
    assert_eq!(out.signature.val_accuracy, 0.5);
    assert_eq!(out.signature.iterations_used, cfg.max_iterations);
    assert_eq!(out.history.len(), cfg.max_iterations + 1);
}

#[test]
fn zero_target_stops_after_first_iteration() {
    let b = bundle(&[(1.0, 2.0); 10], &[(1.0, 2.0); 10]);
    let cfg = SynthConfig {
        target_accuracy: 0.0,
        ..SynthConfig::default()
    };
    let out = synthesize_signature(&b, 1, &SCHEMA, &cfg, &OfflineBackend::new(4, None), None).unwrap();
    assert_eq!(out.signature.iterations_used, 1);
}

#[test]
fn empty_side_is_rejected() {
    let b = bundle(&[(1.0, 0.0); 4], &[]);
    let err = synthesize_signature(&b, 1, &SCHEMA, &SynthConfig::default(), &OfflineBackend::new(4, None), None);
    assert!(matches!(err, Err(SynthError::EmptyBundle(0))));
}

/// Plays back canned refine responses and records the feedback it is
/// shown.
struct Scripted {
    responses: Vec<Result<String, BackendError>>,
    seen_history: Mutex<Vec<Vec<String>>>,
    calls: Mutex<usize>,
}

impl Scripted {
    fn new(responses: Vec<Result<&str, BackendError>>) -> Self {
        Scripted {
            responses: responses.into_iter().map(|r| r.map(str::to_owned)).collect(),
            seen_history: Mutex::new(Vec::new()),
            calls: Mutex::new(0),
        }
    }
}

impl SynthBackend for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn feedback(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        Ok(format!("{} misses", ctx.false_negatives.len() + ctx.false_positives.len()))
    }

    fn refine(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        self.seen_history
            .lock()
            .unwrap()
            .push(ctx.history.iter().map(|h| h.feedback.clone()).collect());
        let mut calls = self.calls.lock().unwrap();
        let r = self.responses[(*calls).min(self.responses.len() - 1)].clone();
        *calls += 1;
        r
    }

    fn combine(&self, _: &str, _: &[(NodeId, String)]) -> Result<String, BackendError> {
        Ok(String::new())
    }

    fn is_offline(&self) -> bool {
        false
    }
}

#[test]
fn unparseable_rule_is_a_failed_iteration() {
    let b = separable();
    let backend = Scripted::new(vec![
        Ok("here you go: {\"rules\": [\"feat[0 >= 1\"]}"),
        Ok(r#"{"rules": ["feat[7] > 1"], "interpretation": "x"}"#),
        Ok(r#"{"rules": ["feat[0] > 0.5"], "interpretation": ""}"#),
    ]);
    let out = synthesize_signature(&b, 1, &SCHEMA, &SynthConfig::default(), &backend, None).unwrap();
    let h = &out.history;
    assert!(h[1].error.is_some());
    assert!(h[2].error.as_deref().unwrap().contains("invalid rule"));
    assert_eq!(h[3].rule.to_string(), "feat[0] > 0.5");
    assert_eq!(out.signature.rule.to_string(), "feat[0] > 0.5");
    // empty interpretation falls back to a generated description
    assert!(!out.signature.text.is_empty());
    let seen = backend.seen_history.lock().unwrap();
    assert!(seen[1].last().unwrap().starts_with("syntax error"));
    assert!(seen[2].last().unwrap().starts_with("syntax error"));
}

#[test]
fn best_rule_is_kept_when_later_ones_are_worse() {
    let b = separable();
    let cfg = SynthConfig {
        max_iterations: 3,
        ..SynthConfig::default()
    };
    let backend = Scripted::new(vec![
        Ok(r#"{"rules": ["feat[0] > 0.5 OR feat[1] > 5"], "interpretation": "good"}"#),
    ]);
    let out = synthesize_signature(&b, 1, &SCHEMA, &cfg, &backend, None).unwrap();
    assert_eq!(out.signature.iterations_used, 1);

    let backend = Scripted::new(vec![
        Ok(r#"{"rules": ["feat[1] < 1"], "interpretation": "weak"}"#),
        Ok(r#"{"rules": ["feat[0] < 0.5"], "interpretation": "inverted"}"#),
    ]);
    let out = synthesize_signature(&b, 1, &SCHEMA, &cfg, &backend, None).unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(out.signature.text, "weak");
    let best = out.history[1..].iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
    assert_eq!(out.signature.val_accuracy, best);
}

#[test]
fn backend_failure_carries_history() {
    let b = separable();
    let backend = Scripted::new(vec![
        Ok(r#"{"rules": ["feat[1] < 1"], "interpretation": "weak"}"#),
        Err(BackendError::Timeout),
    ]);
    match synthesize_signature(&b, 1, &SCHEMA, &SynthConfig::default(), &backend, None) {
        Err(SynthError::Backend { exemplar, source, history }) => {
            assert_eq!(exemplar, 0);
            assert_eq!(source, BackendError::Timeout);
            assert_eq!(history.len(), 2);
        }
        other => panic!("expected a backend error, got {other:?}"),
    }
}

#[test]
fn offline_runs_are_deterministic() {
    let b = bundle(
        &[(1.0, 3.0), (2.0, 1.0), (0.5, 4.0), (3.0, 0.0), (1.5, 2.0)],
        &[(0.0, 0.0), (0.2, 5.0), (2.5, 3.5), (0.1, 1.0), (4.0, 4.0)],
    );
    let cfg = SynthConfig {
        render: RenderOptions::default(),
        ..SynthConfig::default()
    };
    let backend = OfflineBackend::new(4, None);
    let a = synthesize_signature(&b, 1, &SCHEMA, &cfg, &backend, None).unwrap();
    let c = synthesize_signature(&b, 1, &SCHEMA, &cfg, &backend, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    assert!(a.history.len() <= cfg.max_iterations + 1);
    for r in &a.history {
        for x in [r.train_pos_acc, r.train_neg_acc, r.val_accuracy] {
            assert!((0.0..=1.0).contains(&x));
        }
    }
}
