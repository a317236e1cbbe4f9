//! Multi-hop node summaries and positive/negative sampling around exemplars.
//!
//! A summary describes a node by its own features, and for each hop
//! `h = 1..=hops` the normalized distribution of predicted classes among
//! nodes at exact distance `h` together with the mean per-attribute L1
//! distance between those nodes and a reference exemplar. Only distribution
//! level information is kept, so a summary's size does not grow with degree.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::graph::{ClassId, Graph, GraphError, NodeId, PredictionVec};
use crate::knn::RevKnnIndex;

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{labels} predictions for a graph of {nodes} nodes")]
    SizeMismatch { labels: usize, nodes: usize },
    #[error("exemplar {0} has an empty reverse-kNN set")]
    NoPositives(NodeId),
    #[error("exemplar {0} has no negative candidates")]
    NoNegatives(NodeId),
    #[error("node {0} is not an indexed train node")]
    UnknownExemplar(NodeId),
    #[error("sample size must be at least 2, got {0}")]
    InvalidSampleSize(usize),
    #[error("train ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSummary {
    /// Fraction of hop nodes per predicted class; empty iff the hop is empty.
    pub class_freq: BTreeMap<ClassId, f64>,
    /// Mean `|x_u[i] - x_e[i]|` over hop nodes `u`; absent for an empty hop.
    pub l1: Option<Vec<f64>>,
}

impl HopSummary {
    pub fn is_empty(&self) -> bool {
        self.class_freq.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: NodeId,
    pub features: Vec<f64>,
    /// `hops[h - 1]` summarizes hop `h`.
    pub hops: Vec<HopSummary>,
    pub reference_exemplar: NodeId,
    pub degree: usize,
}

impl NodeSummary {
    pub fn num_hops(&self) -> usize {
        self.hops.len()
    }

    /// Summary of hop `h` (1-based), if within range.
    pub fn hop(&self, h: usize) -> Option<&HopSummary> {
        h.checked_sub(1).and_then(|i| self.hops.get(i))
    }

    /// Class frequency at hop `h`: `None` for an empty or missing hop, 0 for
    /// a class absent from a non-empty hop.
    pub fn freq(&self, h: usize, class: ClassId) -> Option<f64> {
        let hop = self.hop(h).filter(|s| !s.is_empty())?;
        Some(hop.class_freq.get(&class).copied().unwrap_or(0.0))
    }

    pub fn l1(&self, h: usize, i: usize) -> Option<f64> {
        self.hop(h)?.l1.as_ref()?.get(i).copied()
    }

    pub fn feature(&self, i: usize) -> Option<f64> {
        self.features.get(i).copied()
    }

    /// JSON object in prompt shape: `node_id`, `features`, then one
    /// `"<h>-hop": {"neighbor_class_freq": {..}}` entry per hop. With
    /// `opts.detail` each hop also carries `l1`, and `degree` is appended.
    pub fn to_prompt_json(&self, opts: &RenderOptions) -> Value {
        let mut obj = Map::new();
        obj.insert("node_id".into(), json!(self.node_id));
        obj.insert(
            "features".into(),
            json!(self.features.iter().map(|&x| opts.round(x)).collect::<Vec<_>>()),
        );
        for (i, hop) in self.hops.iter().enumerate() {
            let freq: Map<String, Value> = hop
                .class_freq
                .iter()
                .map(|(c, &f)| (c.to_string(), json!(opts.round(f))))
                .collect();
            let mut entry = Map::new();
            entry.insert("neighbor_class_freq".into(), Value::Object(freq));
            if opts.detail {
                if let Some(l1) = &hop.l1 {
                    entry.insert(
                        "l1".into(),
                        json!(l1.iter().map(|&x| opts.round(x)).collect::<Vec<_>>()),
                    );
                }
            }
            obj.insert(format!("{}-hop", i + 1), Value::Object(entry));
        }
        if opts.detail {
            obj.insert("degree".into(), json!(self.degree));
        }
        Value::Object(obj)
    }

    fn python_entries(&self, opts: &RenderOptions) -> Vec<String> {
        let mut out = vec![
            format!("'node_id': {}", self.node_id),
            format!("'features': {}", py_list(&self.features, opts)),
        ];
        for (i, hop) in self.hops.iter().enumerate() {
            let freq: Vec<String> = hop
                .class_freq
                .iter()
                .map(|(c, &f)| format!("{c}: {}", opts.py_float(f)))
                .collect();
            let mut inner = format!("'neighbor_class_freq': {{{}}}", freq.join(", "));
            if opts.detail {
                if let Some(l1) = &hop.l1 {
                    write!(inner, ", 'l1': {}", py_list(l1, opts)).unwrap();
                }
            }
            out.push(format!("'{}-hop': {{{inner}}}", i + 1));
        }
        if opts.detail {
            out.push(format!("'degree': {}", self.degree));
        }
        out
    }

    /// Python-dict style rendering on one line.
    pub fn render_inline(&self, opts: &RenderOptions) -> String {
        format!("{{{}}}", self.python_entries(opts).join(", "))
    }

    /// Python-dict style rendering with one top-level key per line.
    pub fn render_block(&self, opts: &RenderOptions) -> String {
        format!("{{\n  {}\n}}", self.python_entries(opts).join(",\n  "))
    }
}

/// Controls how summaries are printed into prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Include per-hop L1 distances and the degree.
    pub detail: bool,
    /// Round reals to this many decimals before printing.
    pub decimals: Option<u32>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            detail: true,
            decimals: Some(4),
        }
    }
}

impl RenderOptions {
    fn round(&self, x: f64) -> f64 {
        match self.decimals {
            Some(d) => format!("{x:.*}", d as usize).parse().unwrap_or(x),
            None => x,
        }
    }

    /// Shortest round-trip decimal, with `.0` on integral values.
    pub fn py_float(&self, x: f64) -> String {
        let x = self.round(x);
        let s = x.to_string();
        if x.is_finite() && !s.contains('.') {
            s + ".0"
        } else {
            s
        }
    }
}

fn py_list(values: &[f64], opts: &RenderOptions) -> String {
    let items: Vec<String> = values.iter().map(|&x| opts.py_float(x)).collect();
    format!("[{}]", items.join(", "))
}

/// Summary of `v` over hops `1..=hops` with L1 distances measured against
/// `exemplar`'s features.
pub fn summarize(
    graph: &Graph,
    preds: &PredictionVec,
    exemplar: NodeId,
    v: NodeId,
    hops: usize,
) -> Result<NodeSummary, SummaryError> {
    if preds.len() != graph.num_nodes() {
        return Err(SummaryError::SizeMismatch {
            labels: preds.len(),
            nodes: graph.num_nodes(),
        });
    }
    if exemplar >= graph.num_nodes() {
        return Err(GraphError::InvalidNode(exemplar).into());
    }
    let layers = graph.hop_layers(v, hops)?;
    let reference = graph.node_features(exemplar);
    let d = graph.feature_dim();
    let hops = layers
        .iter()
        .map(|layer| {
            if layer.is_empty() {
                return HopSummary {
                    class_freq: BTreeMap::new(),
                    l1: None,
                };
            }
            let n = layer.len() as f64;
            let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
            let mut l1 = vec![0.0; d];
            for &u in layer {
                *counts.entry(preds.class_of(u)).or_default() += 1;
                for (acc, (x, r)) in l1.iter_mut().zip(graph.node_features(u).iter().zip(reference)) {
                    *acc += (x - r).abs();
                }
            }
            HopSummary {
                class_freq: counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect(),
                l1: Some(l1.into_iter().map(|s| s / n).collect()),
            }
        })
        .collect();
    Ok(NodeSummary {
        node_id: v,
        features: graph.node_features(v).to_vec(),
        hops,
        reference_exemplar: exemplar,
        degree: graph.degree(v),
    })
}

/// Summaries of `nodes` referenced to `exemplar`, in input order.
pub fn summarize_all(
    graph: &Graph,
    preds: &PredictionVec,
    exemplar: NodeId,
    nodes: &[NodeId],
    hops: usize,
) -> Result<Vec<NodeSummary>, SummaryError> {
    nodes
        .iter()
        .map(|&v| summarize(graph, preds, exemplar, v, hops))
        .collect()
}

/// Node ids drawn for one exemplar, split into train and validation parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub exemplar: NodeId,
    pub pos_train: Vec<NodeId>,
    pub pos_val: Vec<NodeId>,
    pub neg_train: Vec<NodeId>,
    pub neg_val: Vec<NodeId>,
    pub seed: u64,
}

fn train_count(m: usize, ratio: f64) -> usize {
    ((ratio * m as f64).round() as usize).min(m)
}

/// Draws up to `n_each` positives from the exemplar's reverse-kNN set and up
/// to `n_each` negatives from the remaining train nodes (never the exemplar),
/// uniformly without replacement, then splits each side so that
/// `round(train_ratio * m)` go to train. The RNG stream is keyed by the
/// exemplar id so draws for different exemplars are independent.
pub fn sample_pos_neg(
    index: &RevKnnIndex,
    exemplar: NodeId,
    n_each: usize,
    train_ratio: f64,
    seed: u64,
) -> Result<SampleSplit, SummaryError> {
    if n_each < 2 {
        return Err(SummaryError::InvalidSampleSize(n_each));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(SummaryError::InvalidRatio(train_ratio));
    }
    if index.class_of(exemplar).is_none() {
        return Err(SummaryError::UnknownExemplar(exemplar));
    }
    let positives = index.rev_set(exemplar);
    if positives.is_empty() {
        return Err(SummaryError::NoPositives(exemplar));
    }
    let negatives: Vec<NodeId> = index
        .train_nodes()
        .filter(|&u| u != exemplar && positives.binary_search(&u).is_err())
        .collect();
    if negatives.is_empty() {
        return Err(SummaryError::NoNegatives(exemplar));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(exemplar as u64);
    let mut draw = |pool: &[NodeId]| -> (Vec<NodeId>, Vec<NodeId>) {
        let m = n_each.min(pool.len());
        let mut picked: Vec<NodeId> = rand::seq::index::sample(&mut rng, pool.len(), m)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        let val = picked.split_off(train_count(m, train_ratio));
        (picked, val)
    };
    let (pos_train, pos_val) = draw(positives);
    let (neg_train, neg_val) = draw(&negatives);
    Ok(SampleSplit {
        exemplar,
        pos_train,
        pos_val,
        neg_train,
        neg_val,
        seed,
    })
}

/// A [`SampleSplit`] with summaries attached, all referenced to the
/// exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBundle {
    pub exemplar: NodeId,
    pub exemplar_summary: NodeSummary,
    pub pos_train: Vec<NodeSummary>,
    pub pos_val: Vec<NodeSummary>,
    pub neg_train: Vec<NodeSummary>,
    pub neg_val: Vec<NodeSummary>,
    pub seed: u64,
}

impl SampleBundle {
    pub fn attach(
        split: &SampleSplit,
        graph: &Graph,
        preds: &PredictionVec,
        hops: usize,
    ) -> Result<Self, SummaryError> {
        let e = split.exemplar;
        let summ = |ids: &[NodeId]| summarize_all(graph, preds, e, ids, hops);
        Ok(SampleBundle {
            exemplar: e,
            exemplar_summary: summarize(graph, preds, e, e, hops)?,
            pos_train: summ(&split.pos_train)?,
            pos_val: summ(&split.pos_val)?,
            neg_train: summ(&split.neg_train)?,
            neg_val: summ(&split.neg_val)?,
            seed: split.seed,
        })
    }
}

/// Samples and summarizes bundles for many exemplars in parallel. Output
/// order follows `exemplars`.
pub fn build_bundles(
    graph: &Graph,
    preds: &PredictionVec,
    index: &RevKnnIndex,
    exemplars: &[NodeId],
    n_each: usize,
    train_ratio: f64,
    hops: usize,
    seed: u64,
) -> Result<Vec<SampleBundle>, SummaryError> {
    exemplars
        .par_iter()
        .map(|&e| {
            let split = sample_pos_neg(index, e, n_each, train_ratio, seed)?;
            SampleBundle::attach(&split, graph, preds, hops)
        })
        .collect()
}
