//! Deterministic rule induction used when no language model is configured.

use std::collections::BTreeSet;

use serde_json::json;

use super::{BackendError, StepContext, SynthBackend};
use crate::graph::{ClassId, NodeId};
use crate::rules::{describe_rule, eval_rule, join_texts, CmpOp, Field, RuleAst};
use crate::summary::NodeSummary;

fn field_value(f: Field, s: &NodeSummary) -> Option<f64> {
    match f {
        Field::Feat(i) => s.feature(i),
        Field::Freq { hop, class } => s.freq(hop, class),
        Field::L1 { hop, attr } => s.l1(hop, attr),
        Field::Degree => Some(s.degree as f64),
    }
}

fn candidate_fields(nodes: &[&NodeSummary]) -> Vec<Field> {
    let d = nodes.iter().map(|s| s.features.len()).max().unwrap_or(0);
    let hops = nodes.iter().map(|s| s.num_hops()).max().unwrap_or(0);
    let classes: BTreeSet<ClassId> = nodes
        .iter()
        .flat_map(|s| s.hops.iter().flat_map(|h| h.class_freq.keys().copied()))
        .collect();
    let mut fields: Vec<Field> = (0..d).map(Field::Feat).collect();
    for hop in 1..=hops {
        fields.extend(classes.iter().map(|&class| Field::Freq { hop, class }));
        fields.extend((0..d).map(|attr| Field::L1 { hop, attr }));
    }
    fields.push(Field::Degree);
    fields
}

/// Threshold predicates `field >= t` and `field < t` for every midpoint `t`
/// between consecutive distinct observed values, with their outcomes on
/// `nodes`, sorted by canonical text.
fn candidate_predicates(nodes: &[&NodeSummary]) -> Vec<(String, RuleAst, Vec<bool>)> {
    let mut out = Vec::new();
    for field in candidate_fields(nodes) {
        let mut values: Vec<f64> = nodes.iter().filter_map(|s| field_value(field, s)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = pair[0] + (pair[1] - pair[0]) / 2.0;
            for op in [CmpOp::Ge, CmpOp::Lt] {
                let rule = RuleAst::cmp(field, op, t);
                let hits = nodes.iter().map(|s| eval_rule(&rule, s)).collect();
                out.push((rule.to_string(), rule, hits));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    out
}

/// Balanced accuracy scaled by `2 * P * N` so comparisons are exact.
fn score(hits: &[bool], n_pos: usize) -> u64 {
    let n_neg = hits.len() - n_pos;
    let tp = hits[..n_pos].iter().filter(|&&h| h).count() as u64;
    let tn = hits[n_pos..].iter().filter(|&&h| !h).count() as u64;
    tp * n_neg as u64 + tn * n_pos as u64
}

/// Greedy threshold-rule induction. Starting from TRUE, each step adds the
/// single predicate (joined with AND or OR) that most raises balanced train
/// accuracy; ties prefer the lexicographically smallest predicate text, then
/// AND. Stops after `max_terms` predicates or when nothing improves.
pub fn offline_induce(pos: &[&NodeSummary], neg: &[&NodeSummary], max_terms: usize) -> RuleAst {
    if pos.is_empty() || neg.is_empty() {
        return RuleAst::Const(true);
    }
    let nodes: Vec<&NodeSummary> = pos.iter().chain(neg).copied().collect();
    let n_pos = pos.len();
    let preds = candidate_predicates(&nodes);

    let mut rule = RuleAst::Const(true);
    let mut hits = vec![true; nodes.len()];
    let mut best = score(&hits, n_pos);
    for term in 0..max_terms {
        let mut pick: Option<(u64, usize, bool, Vec<bool>)> = None;
        for (i, (_, _, p)) in preds.iter().enumerate() {
            let joins: &[bool] = if term == 0 { &[true] } else { &[true, false] };
            for &conj in joins {
                let combined: Vec<bool> = hits
                    .iter()
                    .zip(p)
                    .map(|(&h, &q)| if conj { h && q } else { h || q })
                    .collect();
                let s = score(&combined, n_pos);
                if s > pick.as_ref().map_or(best, |c| c.0) {
                    pick = Some((s, i, conj, combined));
                }
            }
        }
        let Some((s, i, conj, combined)) = pick else {
            break;
        };
        let pred = preds[i].1.clone();
        rule = match (term, conj) {
            (0, _) => pred,
            (_, true) => RuleAst::and(rule, pred),
            (_, false) => RuleAst::or(rule, pred),
        };
        hits = combined;
        best = s;
    }
    rule
}

/// Backend that ignores prompts and induces threshold rules directly from
/// the bundle, allowing one more predicate per iteration.
#[derive(Debug, Clone)]
pub struct OfflineBackend {
    pub max_terms: usize,
    pub feature_names: Option<Vec<String>>,
}

impl OfflineBackend {
    pub fn new(max_terms: usize, feature_names: Option<Vec<String>>) -> Self {
        OfflineBackend {
            max_terms,
            feature_names,
        }
    }
}

impl SynthBackend for OfflineBackend {
    fn name(&self) -> &str {
        "offline"
    }

    fn feedback(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        Ok(format!(
            "{} false negatives and {} false positives on the train sample; \
             allow up to {} threshold conditions next.",
            ctx.false_negatives.len(),
            ctx.false_positives.len(),
            self.max_terms.min(ctx.iteration)
        ))
    }

    fn refine(&self, ctx: &StepContext<'_>) -> Result<String, BackendError> {
        let pos: Vec<&NodeSummary> = ctx.bundle.pos_train.iter().collect();
        let neg: Vec<&NodeSummary> = ctx.bundle.neg_train.iter().collect();
        let rule = offline_induce(&pos, &neg, self.max_terms.min(ctx.iteration));
        let text = describe_rule(&rule, self.feature_names.as_deref());
        Ok(json!({ "rules": [rule.to_string()], "interpretation": text }).to_string())
    }

    fn combine(&self, _class_name: &str, texts: &[(NodeId, String)]) -> Result<String, BackendError> {
        let texts: Vec<&str> = texts.iter().map(|(_, t)| t.as_str()).collect();
        Ok(join_texts(&texts))
    }

    fn is_offline(&self) -> bool {
        true
    }
}
