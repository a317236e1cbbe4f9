#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use xemplar_core::graph::{EmbeddingMatrix, Graph, Matrix, PredictionVec};
use xemplar_core::rules::{CmpOp, Field, NumExpr, RuleAst};
use xemplar_core::summary::{HopSummary, NodeSummary};

pub fn field(max_index: usize) -> impl Strategy<Value = Field> {
    prop_oneof![
        (0..max_index).prop_map(Field::Feat),
        (1..4usize, 0..max_index).prop_map(|(hop, class)| Field::Freq { hop, class }),
        (1..4usize, 0..max_index).prop_map(|(hop, attr)| Field::L1 { hop, attr }),
        Just(Field::Degree),
    ]
}

pub fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        (-1.0e3..1.0e3f64),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

pub fn cmp_op() -> impl Strategy<Value = CmpOp> {
    proptest::sample::select(CmpOp::ALL.to_vec())
}

fn num_expr(max_index: usize, rule: BoxedStrategy<RuleAst>) -> BoxedStrategy<NumExpr> {
    let leaf = prop_oneof![
        3 => literal().prop_map(NumExpr::Lit),
        3 => field(max_index).prop_map(NumExpr::Field),
        1 => rule.prop_map(|r| NumExpr::Indicator(Box::new(r))),
    ];
    leaf.prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| NumExpr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| NumExpr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| NumExpr::Mul(Box::new(a), Box::new(b))),
        ]
    })
    .boxed()
}

fn simple_cmp(max_index: usize) -> BoxedStrategy<RuleAst> {
    (field(max_index), cmp_op(), literal())
        .prop_map(|(f, op, x)| RuleAst::cmp(f, op, x))
        .boxed()
}

/// Random rules over fields with indices below `max_index`, including
/// arithmetic and nested indicators.
pub fn rule(max_index: usize) -> BoxedStrategy<RuleAst> {
    let atom = prop_oneof![
        1 => any::<bool>().prop_map(RuleAst::Const),
        4 => simple_cmp(max_index),
        2 => (cmp_op(), num_expr(max_index, simple_cmp(max_index)), num_expr(max_index, simple_cmp(max_index)))
            .prop_map(|(op, a, b)| RuleAst::Cmp(op, a, b)),
    ];
    atom.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| RuleAst::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| RuleAst::or(a, b)),
            inner.prop_map(RuleAst::not),
        ]
    })
    .boxed()
}

/// Random summaries, possibly with empty hops, short feature vectors and
/// missing L1 data.
pub fn summary() -> impl Strategy<Value = NodeSummary> {
    let hop = prop_oneof![
        Just(HopSummary {
            class_freq: BTreeMap::new(),
            l1: None,
        }),
        (
            proptest::collection::btree_map(0..4usize, 0.01..1.0f64, 1..4),
            proptest::option::of(proptest::collection::vec(0.0..5.0f64, 0..4)),
        )
            .prop_map(|(raw, l1)| {
                let total: f64 = raw.values().sum();
                HopSummary {
                    class_freq: raw.into_iter().map(|(c, w)| (c, w / total)).collect(),
                    l1,
                }
            }),
    ];
    (
        proptest::collection::vec(-5.0..5.0f64, 0..4),
        proptest::collection::vec(hop, 0..4),
        0..30usize,
    )
        .prop_map(|(features, hops, degree)| NodeSummary {
            node_id: 0,
            features,
            hops,
            reference_exemplar: 0,
            degree,
        })
}

/// Simple random graph with `n` nodes and edges given as index pairs.
pub fn graph_from(n: usize, pairs: &[(usize, usize)], dim: usize) -> Graph {
    let edges = pairs.iter().map(|&(a, b)| (a % n, b % n));
    let data: Vec<f64> = (0..n * dim).map(|i| ((i * 7919) % 13) as f64 / 4.0).collect();
    Graph::new(n, edges, Matrix::new(n, dim, data).unwrap(), None)
        .unwrap()
        .0
}

pub fn graph_strategy(max_n: usize) -> impl Strategy<Value = (Graph, PredictionVec)> {
    (2..max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..4 * n),
            proptest::collection::vec(0..3usize, n),
        )
            .prop_map(move |(pairs, labels)| {
                (graph_from(n, &pairs, 2), PredictionVec::new(labels, Some(3)).unwrap())
            })
    })
}

/// Embeddings with coarse integer coordinates, so distance ties are common.
pub fn embedding_instance(max_n: usize) -> impl Strategy<Value = (EmbeddingMatrix, PredictionVec, Vec<usize>)> {
    (3..max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::collection::vec(-3i8..4, 2), n),
            proptest::collection::vec(0..3usize, n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(rows, labels, in_train)| {
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(f64::from).collect())
                    .collect();
                let mut train: Vec<usize> = (0..rows.len()).filter(|&i| in_train[i]).collect();
                if train.is_empty() {
                    train.push(0);
                }
                (
                    EmbeddingMatrix(Matrix::from_rows(&rows).unwrap()),
                    PredictionVec::new(labels, Some(3)).unwrap(),
                    train,
                )
            })
    })
}
