//! Same-class k-nearest-neighbor queries and reverse-kNN indexes.
//!
//! Neighbors are restricted to train nodes with the same predicted class as
//! the query, ranked by L2 distance over the raw embeddings with ties broken
//! by ascending node id. A node is never its own neighbor.
//!
//! The reverse-kNN set of `v` holds every train node `u` whose kNN list
//! contains `v`. The representative power of `v` is the size of that set over
//! the size of `v`'s class roster. For large train sets the index can be
//! built from a uniform sample of query nodes instead (see
//! [`rev_knn_sampled`] and [`sample_size`]).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClassId, EmbeddingMatrix, NodeId, PredictionVec};

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("query node {0} is not in the train set")]
    QueryNotInTrain(NodeId),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("node {0} is not indexed")]
    UnknownNode(NodeId),
    #[error("sample size {z} outside [1, {train}]")]
    SampleSizeOutOfRange { z: usize, train: usize },
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("inconsistent index: {0}")]
    InvalidIndex(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    Exact,
    Sampled,
}

/// Error threshold and failure probability for the sampled index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub theta: f64,
    pub delta: f64,
    pub seed: u64,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), KnnError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(KnnError::InvalidParams(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 2.0) {
            return Err(KnnError::InvalidParams(format!(
                "delta must lie in (0, 2], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Number of sampled query nodes that keeps every approximate representative
/// power within `theta` of the exact one with probability at least
/// `1 - delta`: `ceil(ln(2 / delta) * (2 + theta) / theta^2)`.
pub fn sample_size(params: &SamplingParams) -> Result<usize, KnnError> {
    params.validate()?;
    let bound = (2.0 / params.delta).ln() * (2.0 + params.theta) / (params.theta * params.theta);
    // Snap values within rounding noise of an integer before taking the ceiling.
    let nearest = bound.round();
    let z = if (bound - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        bound.ceil()
    };
    Ok(z.max(0.0) as usize)
}

/// Same-class train rosters, each sorted by node id.
struct Rosters<'a> {
    embeddings: &'a EmbeddingMatrix,
    preds: &'a PredictionVec,
    by_class: BTreeMap<ClassId, Vec<NodeId>>,
    in_train: Vec<bool>,
}

impl<'a> Rosters<'a> {
    fn new(
        embeddings: &'a EmbeddingMatrix,
        preds: &'a PredictionVec,
        train: &[NodeId],
    ) -> Result<Self, KnnError> {
        let n = preds.len();
        if embeddings.num_nodes() != n {
            return Err(KnnError::InvalidInput(format!(
                "{} embedding rows for {n} predictions",
                embeddings.num_nodes()
            )));
        }
        let mut in_train = vec![false; n];
        let mut by_class: BTreeMap<ClassId, Vec<NodeId>> = BTreeMap::new();
        for &u in train {
            if u >= n {
                return Err(KnnError::InvalidInput(format!("train node {u} out of range")));
            }
            if std::mem::replace(&mut in_train[u], true) {
                return Err(KnnError::InvalidInput(format!("train node {u} listed twice")));
            }
            by_class.entry(preds.class_of(u)).or_default().push(u);
        }
        for roster in by_class.values_mut() {
            roster.sort_unstable();
        }
        Ok(Rosters {
            embeddings,
            preds,
            by_class,
            in_train,
        })
    }

    fn knn(&self, q: NodeId, k: usize) -> Result<Vec<NodeId>, KnnError> {
        if k == 0 {
            return Err(KnnError::InvalidK);
        }
        if q >= self.in_train.len() || !self.in_train[q] {
            return Err(KnnError::QueryNotInTrain(q));
        }
        let hq = self.embeddings.vector(q);
        let roster = &self.by_class[&self.preds.class_of(q)];
        let mut cands: Vec<(f64, NodeId)> = roster
            .iter()
            .filter(|&&u| u != q)
            .map(|&u| (squared_l2(hq, self.embeddings.vector(u)), u))
            .collect();
        let cmp = |a: &(f64, NodeId), b: &(f64, NodeId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cands.len() > k {
            cands.select_nth_unstable_by(k - 1, cmp);
            cands.truncate(k);
        }
        cands.sort_unstable_by(cmp);
        Ok(cands.into_iter().map(|(_, u)| u).collect())
    }
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` train nodes of `q`'s predicted class closest to `q` (excluding
/// `q`), nearest first. Fewer are returned when the roster is smaller.
pub fn knn_query(
    embeddings: &EmbeddingMatrix,
    preds: &PredictionVec,
    train: &[NodeId],
    q: NodeId,
    k: usize,
) -> Result<Vec<NodeId>, KnnError> {
    Rosters::new(embeddings, preds, train)?.knn(q, k)
}

/// Reverse-kNN sets over the train nodes, exact or estimated from a sample
/// of query nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIndex", into = "RawIndex")]
pub struct RevKnnIndex {
    k: usize,
    mode: IndexMode,
    sample_ids: Option<Vec<NodeId>>,
    rev_sets: BTreeMap<NodeId, Vec<NodeId>>,
    denom: BTreeMap<NodeId, usize>,
    class_rosters: BTreeMap<ClassId, Vec<NodeId>>,
    class_of: BTreeMap<NodeId, ClassId>,
}

#[derive(Serialize, Deserialize)]
struct RawIndex {
    k: usize,
    mode: IndexMode,
    sample_ids: Option<Vec<NodeId>>,
    rev_sets: BTreeMap<NodeId, Vec<NodeId>>,
    denom: BTreeMap<NodeId, usize>,
    class_rosters: BTreeMap<ClassId, Vec<NodeId>>,
}

impl From<RevKnnIndex> for RawIndex {
    fn from(i: RevKnnIndex) -> Self {
        RawIndex {
            k: i.k,
            mode: i.mode,
            sample_ids: i.sample_ids,
            rev_sets: i.rev_sets,
            denom: i.denom,
            class_rosters: i.class_rosters,
        }
    }
}

impl TryFrom<RawIndex> for RevKnnIndex {
    type Error = KnnError;

    fn try_from(raw: RawIndex) -> Result<Self, Self::Error> {
        let index = RevKnnIndex::assemble(
            raw.k,
            raw.mode,
            raw.sample_ids,
            raw.rev_sets,
            raw.class_rosters,
        )?;
        if index.denom != raw.denom {
            return Err(KnnError::InvalidIndex(
                "denominators disagree with rosters and sample".into(),
            ));
        }
        Ok(index)
    }
}

impl RevKnnIndex {
    /// Builds an index from explicit reverse sets, checking that every member
    /// shares its key's class (and lies in the sample, when sampled).
    /// Denominators are derived from the rosters and sample.
    pub fn assemble(
        k: usize,
        mode: IndexMode,
        sample_ids: Option<Vec<NodeId>>,
        mut rev_sets: BTreeMap<NodeId, Vec<NodeId>>,
        mut class_rosters: BTreeMap<ClassId, Vec<NodeId>>,
    ) -> Result<Self, KnnError> {
        if k == 0 {
            return Err(KnnError::InvalidK);
        }
        let mut class_of = BTreeMap::new();
        for (&c, roster) in class_rosters.iter_mut() {
            roster.sort_unstable();
            roster.dedup();
            for &v in roster.iter() {
                if class_of.insert(v, c).is_some() {
                    return Err(KnnError::InvalidIndex(format!("node {v} in two rosters")));
                }
            }
        }
        let sample_ids = match (mode, sample_ids) {
            (IndexMode::Exact, None) => None,
            (IndexMode::Sampled, Some(mut s)) => {
                s.sort_unstable();
                s.dedup();
                if let Some(&bad) = s.iter().find(|u| !class_of.contains_key(u)) {
                    return Err(KnnError::InvalidIndex(format!("sampled node {bad} not in train")));
                }
                Some(s)
            }
            (IndexMode::Exact, Some(_)) => {
                return Err(KnnError::InvalidIndex("exact index carries a sample".into()))
            }
            (IndexMode::Sampled, None) => {
                return Err(KnnError::InvalidIndex("sampled index without sample ids".into()))
            }
        };
        for &v in class_of.keys() {
            rev_sets.entry(v).or_default();
        }
        for (&v, members) in rev_sets.iter_mut() {
            let Some(&cv) = class_of.get(&v) else {
                return Err(KnnError::InvalidIndex(format!("reverse set key {v} not in train")));
            };
            members.sort_unstable();
            members.dedup();
            for &u in members.iter() {
                if u == v || class_of.get(&u) != Some(&cv) {
                    return Err(KnnError::InvalidIndex(format!(
                        "node {u} cannot be in the reverse set of {v}"
                    )));
                }
                if let Some(s) = &sample_ids {
                    if s.binary_search(&u).is_err() {
                        return Err(KnnError::InvalidIndex(format!(
                            "reverse set of {v} holds unsampled node {u}"
                        )));
                    }
                }
            }
        }
        let mut index = RevKnnIndex {
            k,
            mode,
            sample_ids,
            rev_sets,
            denom: BTreeMap::new(),
            class_rosters,
            class_of,
        };
        let population: BTreeMap<ClassId, usize> = index
            .class_rosters
            .keys()
            .map(|&c| (c, index.population(c).len()))
            .collect();
        index.denom = index
            .class_of
            .iter()
            .map(|(&v, c)| (v, population[c]))
            .collect();
        Ok(index)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn sample_ids(&self) -> Option<&[NodeId]> {
        self.sample_ids.as_deref()
    }

    /// Reverse set of `v`, sorted. Empty for nodes outside the index.
    pub fn rev_set(&self, v: NodeId) -> &[NodeId] {
        self.rev_sets.get(&v).map_or(&[], Vec::as_slice)
    }

    pub fn rev_sets(&self) -> &BTreeMap<NodeId, Vec<NodeId>> {
        &self.rev_sets
    }

    pub fn denom(&self, v: NodeId) -> Option<usize> {
        self.denom.get(&v).copied()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.class_rosters.keys().copied()
    }

    /// Train nodes predicted as `class`, sorted.
    pub fn roster(&self, class: ClassId) -> &[NodeId] {
        self.class_rosters.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn class_of(&self, v: NodeId) -> Option<ClassId> {
        self.class_of.get(&v).copied()
    }

    /// All indexed (train) nodes, sorted.
    pub fn train_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.class_of.keys().copied()
    }

    /// Nodes a reverse set of `class` can contain: the class roster for an
    /// exact index, its sampled part otherwise.
    pub fn population(&self, class: ClassId) -> Vec<NodeId> {
        let roster = self.roster(class);
        match &self.sample_ids {
            None => roster.to_vec(),
            Some(s) => roster
                .iter()
                .copied()
                .filter(|u| s.binary_search(u).is_ok())
                .collect(),
        }
    }
}

fn build_index(
    rosters: &Rosters<'_>,
    queries: &[NodeId],
    k: usize,
    mode: IndexMode,
    sample_ids: Option<Vec<NodeId>>,
) -> Result<RevKnnIndex, KnnError> {
    let lists: Vec<Vec<NodeId>> = queries
        .par_iter()
        .map(|&u| rosters.knn(u, k))
        .collect::<Result<_, _>>()?;
    let mut rev_sets: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (&u, list) in queries.iter().zip(&lists) {
        for &v in list {
            rev_sets.entry(v).or_default().push(u);
        }
    }
    RevKnnIndex::assemble(k, mode, sample_ids, rev_sets, rosters.by_class.clone())
}

/// Exact reverse-kNN index over every train node.
pub fn rev_knn_exact(
    embeddings: &EmbeddingMatrix,
    preds: &PredictionVec,
    train: &[NodeId],
    k: usize,
) -> Result<RevKnnIndex, KnnError> {
    if k == 0 {
        return Err(KnnError::InvalidK);
    }
    let rosters = Rosters::new(embeddings, preds, train)?;
    let mut queries = train.to_vec();
    queries.sort_unstable();
    build_index(&rosters, &queries, k, IndexMode::Exact, None)
}

/// Reverse-kNN index estimated from `z` query nodes drawn uniformly without
/// replacement from the train set. Neighbors are still searched over the
/// whole train set; only the queries are sampled.
pub fn rev_knn_sampled(
    embeddings: &EmbeddingMatrix,
    preds: &PredictionVec,
    train: &[NodeId],
    k: usize,
    z: usize,
    seed: u64,
) -> Result<RevKnnIndex, KnnError> {
    if k == 0 {
        return Err(KnnError::InvalidK);
    }
    if z == 0 || z > train.len() {
        return Err(KnnError::SampleSizeOutOfRange {
            z,
            train: train.len(),
        });
    }
    let rosters = Rosters::new(embeddings, preds, train)?;
    let mut pool = train.to_vec();
    pool.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<NodeId> = rand::seq::index::sample(&mut rng, pool.len(), z)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    sample.sort_unstable();
    build_index(&rosters, &sample, k, IndexMode::Sampled, Some(sample.clone()))
}

/// `|rev_set(v)| / denom(v)`, or 0 when the denominator is 0.
pub fn rep_power(index: &RevKnnIndex, v: NodeId) -> Result<f64, KnnError> {
    let denom = index.denom(v).ok_or(KnnError::UnknownNode(v))?;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(index.rev_set(v).len() as f64 / denom as f64)
}
