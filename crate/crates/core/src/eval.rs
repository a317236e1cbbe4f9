//! Fidelity of class explanations against the model's predictions.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClassId, Graph, NodeId, PredictionVec};
use crate::rules::{eval_class_node, ClassExplanation, RulesError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {0} has no positive or negative nodes to evaluate")]
    EmptyEvaluation(ClassId),
    #[error("no classes to report")]
    NoClasses,
    #[error(transparent)]
    Rules(#[from] RulesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Subsample both sides to the same size.
    pub balance: bool,
    /// Largest number of nodes per side when balancing.
    pub cap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            balance: true,
            cap: 500,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: ClassId,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of the true positive and true negative rates. With only one side
    /// present it is that side's rate.
    pub fidelity: f64,
    /// Fraction of evaluated nodes where explanation and model agree.
    pub raw_match_rate: f64,
}

impl ClassMetrics {
    pub fn from_counts(class_id: ClassId, tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let rates: Vec<f64> = [(tp, tp + fn_), (tn, tn + fp)]
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(k, n)| ratio(k, n))
            .collect();
        let fidelity = if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        ClassMetrics {
            class_id,
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
            fidelity,
            raw_match_rate: ratio(tp + tn, tp + fp + tn + fn_),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn subsample(nodes: &[NodeId], m: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    if m >= nodes.len() {
        return nodes.to_vec();
    }
    let mut picked: Vec<NodeId> = sample(rng, nodes.len(), m).into_iter().map(|i| nodes[i]).collect();
    picked.sort_unstable();
    picked
}

/// Positive and negative evaluation nodes for a class, balanced and capped
/// when `cfg.balance` is set. A side with no nodes does not limit the other.
pub fn eval_sides(
    preds: &PredictionVec,
    class_id: ClassId,
    eval_nodes: &[NodeId],
    cfg: &EvalConfig,
    seed: u64,
) -> (Vec<NodeId>, Vec<NodeId>) {
    let (pos, neg): (Vec<NodeId>, Vec<NodeId>) =
        eval_nodes.iter().partition(|&&v| preds.class_of(v) == class_id);
    if !cfg.balance {
        return (pos, neg);
    }
    let m = [pos.len(), neg.len()]
        .into_iter()
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0)
        .min(cfg.cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class_id as u64);
    let pos = subsample(&pos, m, &mut rng);
    let neg = subsample(&neg, m, &mut rng);
    (pos, neg)
}

/// Applies the class explanation to the evaluation nodes and scores it
/// against the model's predictions.
pub fn evaluate_class(
    expl: &ClassExplanation,
    graph: &Graph,
    preds: &PredictionVec,
    eval_nodes: &[NodeId],
    hops: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<ClassMetrics, EvalError> {
    let c = expl.class_id;
    let (pos, neg) = eval_sides(preds, c, eval_nodes, cfg, seed);
    if pos.is_empty() && neg.is_empty() {
        return Err(EvalError::EmptyEvaluation(c));
    }
    let hits = |nodes: &[NodeId]| -> Result<usize, RulesError> {
        nodes
            .par_iter()
            .map(|&v| eval_class_node(expl, graph, preds, v, hops).map(usize::from))
            .try_reduce(|| 0, |a, b| Ok(a + b))
    };
    let tp = hits(&pos)?;
    let fp = hits(&neg)?;
    Ok(ClassMetrics::from_counts(c, tp, fp, neg.len() - fp, pos.len() - tp))
}

/// Unweighted means over classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fidelity: f64,
    pub raw_match_rate: f64,
}

impl MacroMetrics {
    fn values(&self) -> [f64; 5] {
        [self.precision, self.recall, self.f1, self.fidelity, self.raw_match_rate]
    }

    fn from_values(v: [f64; 5]) -> Self {
        MacroMetrics {
            precision: v[0],
            recall: v[1],
            f1: v[2],
            fidelity: v[3],
            raw_match_rate: v[4],
        }
    }

    pub fn of(metrics: &[ClassMetrics]) -> Result<Self, EvalError> {
        if metrics.is_empty() {
            return Err(EvalError::NoClasses);
        }
        let n = metrics.len() as f64;
        let mut sum = [0.0; 5];
        for m in metrics {
            let v = [m.precision, m.recall, m.f1, m.fidelity, m.raw_match_rate];
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        Ok(Self::from_values(sum.map(|s| s / n)))
    }
}

/// Mean and sample standard deviation of macro metrics over runs. The
/// deviation is `None` for a single run.
pub fn aggregate_runs(runs: &[MacroMetrics]) -> Option<(MacroMetrics, Option<MacroMetrics>)> {
    if runs.is_empty() {
        return None;
    }
    let n = runs.len() as f64;
    let mut mean = [0.0; 5];
    for r in runs {
        for (m, x) in mean.iter_mut().zip(r.values()) {
            *m += x / n;
        }
    }
    let std = (runs.len() > 1).then(|| {
        let mut var = [0.0; 5];
        for r in runs {
            for ((v, x), m) in var.iter_mut().zip(r.values()).zip(mean) {
                *v += (x - m) * (x - m) / (n - 1.0);
            }
        }
        MacroMetrics::from_values(var.map(f64::sqrt))
    });
    Some((MacroMetrics::from_values(mean), std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureEntry {
    pub class_id: ClassId,
    pub exemplar: NodeId,
    pub rule: String,
    pub text: String,
    pub val_accuracy: f64,
}

/// Run metadata copied into the report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunContext {
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub exemplars: BTreeMap<ClassId, Vec<NodeId>>,
    pub signatures: Vec<SignatureEntry>,
    pub combined_texts: BTreeMap<ClassId, String>,
    /// Classes whose combined text fell back to the plain join.
    #[serde(default)]
    pub text_fallbacks: Vec<ClassId>,
    /// Unix seconds.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

impl RunContext {
    pub fn from_explanations(expls: &[ClassExplanation]) -> Self {
        let mut ctx = RunContext::default();
        for e in expls {
            ctx.exemplars.insert(
                e.class_id,
                e.signatures.iter().map(|s| s.exemplar).collect(),
            );
            ctx.combined_texts.insert(e.class_id, e.combined_text.clone());
            if e.text_fallback {
                ctx.text_fallbacks.push(e.class_id);
            }
            ctx.signatures.extend(e.signatures.iter().map(|s| SignatureEntry {
                class_id: s.class_id,
                exemplar: s.exemplar,
                rule: s.rule.to_string(),
                text: s.text.clone(),
                val_accuracy: s.val_accuracy,
            }));
        }
        ctx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub classes: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_std: Option<MacroMetrics>,
    pub context: RunContext,
}

impl Report {
    /// The report without its timestamps, for comparing runs.
    pub fn without_timestamps(&self) -> Report {
        let mut r = self.clone();
        r.context.started_at = None;
        r.context.finished_at = None;
        r
    }
}

pub fn macro_report(metrics: Vec<ClassMetrics>, context: RunContext) -> Result<Report, EvalError> {
    let macro_avg = MacroMetrics::of(&metrics)?;
    Ok(Report {
        classes: metrics,
        macro_avg,
        macro_std: None,
        context,
    })
}

/// Plain-text block with one paragraph per class.
pub fn render_explanations(expls: &[ClassExplanation], class_names: Option<&[String]>) -> String {
    let mut out = String::new();
    for e in expls {
        let name = class_names
            .and_then(|n| n.get(e.class_id))
            .cloned()
            .unwrap_or_else(|| format!("class {}", e.class_id));
        out.push_str(&format!("{name}:\n{}\n", e.combined_text));
        for s in &e.signatures {
            out.push_str(&format!("  exemplar {}: {}\n", s.exemplar, s.rule));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rules::{assemble_class, Signature};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn metrics_from_counts() {
        let m = ClassMetrics::from_counts(0, 8, 2, 9, 1);
        assert!(close(m.precision, 0.8));
        assert!(close(m.recall, 8.0 / 9.0));
        assert!(close(m.fidelity, (8.0 / 9.0 + 9.0 / 11.0) / 2.0));
        assert!(close(m.raw_match_rate, 17.0 / 20.0));
        assert!(close(m.f1, 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0)));
    }

    #[test]
    fn zero_denominators() {
        let m = ClassMetrics::from_counts(0, 0, 0, 5, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.fidelity, 1.0);
    }

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<(NodeId, NodeId)> = (1..n).map(|i| (i - 1, i)).collect();
        let feats = crate::graph::Matrix::filled(n, 1, 0.0);
        Graph::new(n, edges, feats, None).unwrap().0
    }

    fn expl(rule: &str) -> ClassExplanation {
        assemble_class(vec![Signature {
            exemplar: 0,
            class_id: 1,
            rule: rule.parse().unwrap(),
            text: "t".into(),
            val_accuracy: 1.0,
            iterations_used: 1,
        }])
        .unwrap()
    }

    #[test]
    fn constant_true_on_balanced_sample() {
        let g = path_graph(8);
        let preds = PredictionVec::new(vec![1, 1, 1, 1, 0, 0, 0, 0], None).unwrap();
        let nodes: Vec<NodeId> = (0..8).collect();
        let m = evaluate_class(&expl("TRUE"), &g, &preds, &nodes, 1, &EvalConfig::default(), 3).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (4, 4, 0, 0));
        assert!(close(m.fidelity, 0.5));
        assert!(close(m.recall, 1.0));
        assert!(close(m.precision, 0.5));
    }

    #[test]
    fn balancing_caps_sides() {
        let preds = PredictionVec::new(vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0], None).unwrap();
        let nodes: Vec<NodeId> = (0..10).collect();
        let (pos, neg) = eval_sides(&preds, 1, &nodes, &EvalConfig::default(), 5);
        assert_eq!((pos.len(), neg.len()), (2, 2));
        let cfg = EvalConfig { balance: true, cap: 1 };
        let (pos, neg) = eval_sides(&preds, 1, &nodes, &cfg, 5);
        assert_eq!((pos.len(), neg.len()), (1, 1));
        let cfg = EvalConfig { balance: false, cap: 1 };
        let (pos, neg) = eval_sides(&preds, 1, &nodes, &cfg, 5);
        assert_eq!((pos.len(), neg.len()), (2, 8));
    }

    #[test]
    fn empty_evaluation() {
        let g = path_graph(3);
        let preds = PredictionVec::new(vec![1, 0, 0], None).unwrap();
        assert!(matches!(
            evaluate_class(&expl("TRUE"), &g, &preds, &[], 1, &EvalConfig::default(), 0),
            Err(EvalError::EmptyEvaluation(1))
        ));
    }

    #[test]
    fn macro_and_aggregation() {
        let mut a = ClassMetrics::from_counts(0, 1, 0, 1, 0);
        let mut b = a.clone();
        a.fidelity = 0.8;
        b.fidelity = 0.9;
        let r = macro_report(vec![a, b], RunContext::default()).unwrap();
        assert!(close(r.macro_avg.fidelity, 0.85));
        assert!(r.macro_std.is_none());
        assert!(matches!(macro_report(vec![], RunContext::default()), Err(EvalError::NoClasses)));

        let runs: Vec<MacroMetrics> = [0.80, 0.82, 0.84]
            .iter()
            .map(|&f| MacroMetrics { fidelity: f, ..r.macro_avg })
            .collect();
        let (mean, std) = aggregate_runs(&runs).unwrap();
        assert!((mean.fidelity - 0.82).abs() < 1e-12);
        assert!((std.unwrap().fidelity - 0.02).abs() < 1e-12);
        assert!(aggregate_runs(&runs[..1]).unwrap().1.is_none());
    }

    #[test]
    fn report_json_round_trip() {
        let m = ClassMetrics::from_counts(2, 8, 2, 9, 1);
        let mut ctx = RunContext::from_explanations(&[expl("degree >= 2")]);
        ctx.seeds.insert("global".into(), 7);
        ctx.started_at = Some(10);
        let r = macro_report(vec![m], ctx).unwrap();
        let text = serde_json::to_string_pretty(&r).unwrap();
        assert!(text.contains("\"fn\": 1"));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.without_timestamps().context.started_at, None);
    }
}
