//! A fixed worked example for prompt rendering and its golden files.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use xemplar_core::rules::RuleAst;
use xemplar_core::summary::{HopSummary, NodeSummary, RenderOptions};
use xemplar_core::synth::prompt::{render_prompt, HistoryEntry, PromptContext, PromptKind};

pub const RENDER: RenderOptions = RenderOptions {
    detail: false,
    decimals: None,
};

fn node(id: usize, features: [f64; 3], hops: [&[(usize, f64)]; 2]) -> NodeSummary {
    NodeSummary {
        node_id: id,
        features: features.to_vec(),
        hops: hops
            .iter()
            .map(|h| HopSummary {
                class_freq: h.iter().copied().collect::<BTreeMap<_, _>>(),
                l1: None,
            })
            .collect(),
        reference_exemplar: 11757,
        degree: 0,
    }
}

pub struct Example {
    pub exemplar: NodeSummary,
    pub positives: Vec<NodeSummary>,
    pub negatives: Vec<NodeSummary>,
    pub false_negatives: Vec<NodeSummary>,
    pub rule: RuleAst,
    pub history: Vec<HistoryEntry>,
}

pub fn example() -> Example {
    let mixed: &[(usize, f64)] = &[(0, 0.4736842), (1, 0.5263158)];
    Example {
        exemplar: node(11757, [0.06785757, 0.11838776, 3.94833946], [&[(1, 1.0)], &[(1, 1.0)]]),
        positives: vec![
            node(2593, [0.07221082, 0.11624873, 3.92639644], [&[(1, 1.0)], mixed]),
            node(9375, [0.13466489, 0.14399602, 0.05334831], [&[(1, 1.0)], mixed]),
        ],
        negatives: vec![
            node(32414, [0.05580222, 0.08147032, -0.06319338], [&[(0, 1.0)], &[(0, 1.0)]]),
            node(14315, [0.08261909, 0.50772273, 0.49023183], [&[(0, 1.0)], &[(0, 1.0)]]),
        ],
        false_negatives: vec![
            node(
                1920,
                [0.04922352, 0.19213917, 0.6143764],
                [&[(0, 0.5714), (1, 0.4286)], &[(0, 0.9715), (1, 0.0285)]],
            ),
            node(
                15365,
                [0.0492574, 0.19516333, 0.59393265],
                [&[(1, 1.0)], &[(0, 0.25), (1, 0.75)]],
            ),
        ],
        rule: "feat[2] > 3.0 AND hop(1).freq(1) >= 0.5".parse().unwrap(),
        history: vec![HistoryEntry {
            formula: "(feat[2] > 3 AND hop(1).freq(1) >= 0.5)".into(),
            pos_acc: 0.46031746031746035,
            neg_acc: 1.0,
            feedback: "Raise the 1-hop class-1 share threshold from 0.5 to 0.7.".into(),
        }],
    }
}

pub fn render(kind: PromptKind) -> String {
    let f = example();
    let pos: Vec<&NodeSummary> = f.positives.iter().collect();
    let neg: Vec<&NodeSummary> = f.negatives.iter().collect();
    let fns: Vec<&NodeSummary> = f.false_negatives.iter().collect();
    let ctx = PromptContext {
        exemplar: Some(&f.exemplar),
        positives: &pos,
        negatives: &neg,
        current_rule: Some(&f.rule),
        false_negatives: &fns,
        false_positives: &[],
        history: &f.history,
        target_accuracy: Some(0.95),
        feature_names: None,
        render: RENDER,
    };
    render_prompt(kind, &ctx).unwrap()
}

/// Renders `kind` and compares it with the golden file `name` in `dir`.
pub fn compare(dir: &Path, kind: PromptKind, name: &str) -> Result<(), String> {
    let got = render(kind);
    let path = dir.join(name);
    if std::env::var_os("XEMPLAR_DUMP_PROMPTS").is_some() {
        std::fs::write(path.with_extension("out"), &got).map_err(|e| e.to_string())?;
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if got == want {
        return Ok(());
    }
    for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
        if g != w {
            return Err(format!("{name}: first difference at line {}:\n got: {g:?}\nwant: {w:?}", i + 1));
        }
    }
    Err(format!("{name}: lengths differ ({} vs {} bytes)", got.len(), want.len()))
}

pub const GOLDENS: [(PromptKind, &str); 3] = [
    (PromptKind::Query, "query.txt"),
    (PromptKind::Feedback, "feedback.txt"),
    (PromptKind::Refine, "refine.txt"),
];
