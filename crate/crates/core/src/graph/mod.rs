//! Graph storage: adjacency, node features, model outputs and node splits.
//!
//! A [`Graph`] is a simple undirected graph. Directed inputs are accepted by
//! the loaders but always stored symmetrized, so hop distances are computed
//! over the undirected view.

mod io;
mod synthetic;

pub use io::{
    load_embeddings, load_feature_names, load_graph, load_labels, load_matrix, load_split, write_edges,
    write_labels, write_matrix, write_split, EdgeStats,
};
pub use synthetic::{
    generate_ba_shapes, mock_embed, random_split, BA_ATTACHMENT, ROLE_BACKGROUND, ROLE_BASE, ROLE_MIDDLE,
    ROLE_TIP,
};

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type ClassId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: node id {id} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange {
        path: PathBuf,
        line: usize,
        id: usize,
        num_nodes: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}:{line}: negative label {value}")]
    NegativeLabel {
        path: PathBuf,
        line: usize,
        value: i64,
    },
    #[error("label {label} of node {node} is outside [0, {num_classes})")]
    LabelOutOfRange {
        node: NodeId,
        label: ClassId,
        num_classes: usize,
    },
    #[error("node {0} appears more than once across train/val/test")]
    SplitOverlap(NodeId),
    #[error("split references node {id} but the graph has {num_nodes} nodes")]
    SplitNodeOutOfRange { id: NodeId, num_nodes: usize },
    #[error("train split is empty")]
    EmptyTrain,
    #[error("duplicate feature name {0:?}")]
    DuplicateFeatureName(String),
    #[error("edge ({0}, {1}) references a node outside the graph")]
    EdgeOutOfRange(NodeId, NodeId),
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
    #[error("hop count must be at least 1")]
    InvalidHop,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = GraphError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GraphError> {
        if data.len() != rows * cols {
            return Err(GraphError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(GraphError::NonFiniteFeature {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(GraphError::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Per-node embeddings produced by the model being explained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingMatrix(pub Matrix);

impl EmbeddingMatrix {
    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn vector(&self, v: NodeId) -> &[f64] {
        self.0.row(v)
    }
}

/// Predicted class of every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPredictions")]
pub struct PredictionVec {
    labels: Vec<ClassId>,
    num_classes: usize,
}

#[derive(Deserialize)]
struct RawPredictions {
    labels: Vec<ClassId>,
    num_classes: usize,
}

impl TryFrom<RawPredictions> for PredictionVec {
    type Error = GraphError;

    fn try_from(raw: RawPredictions) -> Result<Self, Self::Error> {
        PredictionVec::new(raw.labels, Some(raw.num_classes))
    }
}

impl PredictionVec {
    /// Builds a prediction vector. `num_classes` defaults to `max label + 1`.
    pub fn new(labels: Vec<ClassId>, num_classes: Option<usize>) -> Result<Self, GraphError> {
        let inferred = labels.iter().max().map_or(0, |m| m + 1);
        let num_classes = num_classes.unwrap_or(inferred);
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(GraphError::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        Ok(PredictionVec {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn class_of(&self, v: NodeId) -> ClassId {
        self.labels[v]
    }
}

/// Disjoint train/validation/test node lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<NodeId>,
    #[serde(default)]
    pub val: Vec<NodeId>,
    #[serde(default)]
    pub test: Vec<NodeId>,
}

impl Split {
    pub fn validate(&self, num_nodes: usize) -> Result<(), GraphError> {
        if self.train.is_empty() {
            return Err(GraphError::EmptyTrain);
        }
        let mut seen = vec![false; num_nodes];
        for &id in self.train.iter().chain(&self.val).chain(&self.test) {
            if id >= num_nodes {
                return Err(GraphError::SplitNodeOutOfRange { id, num_nodes });
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(GraphError::SplitOverlap(id));
            }
        }
        Ok(())
    }
}

/// Simple undirected graph with a dense node feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<NodeId>>,
    features: Matrix,
    feature_names: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    features: Matrix,
    feature_names: Option<Vec<String>>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        let (graph, _) = Graph::new(raw.num_nodes, raw.edges, raw.features, raw.feature_names)?;
        Ok(graph)
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            num_nodes: g.num_nodes,
            edges: g.edges,
            features: g.features,
            feature_names: g.feature_names,
        }
    }
}

impl Graph {
    /// Builds a graph from an edge iterator. Self-loops are dropped and
    /// repeated edges merged; both are counted in the returned stats.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        features: Matrix,
        feature_names: Option<Vec<String>>,
    ) -> Result<(Self, EdgeStats), GraphError> {
        if features.rows() != num_nodes {
            return Err(GraphError::DimensionMismatch(format!(
                "feature matrix has {} rows but the graph has {num_nodes} nodes",
                features.rows()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.cols() {
                return Err(GraphError::DimensionMismatch(format!(
                    "{} feature names for {} feature columns",
                    names.len(),
                    features.cols()
                )));
            }
            let mut seen = BTreeSet::new();
            for name in names {
                if !seen.insert(name.as_str()) {
                    return Err(GraphError::DuplicateFeatureName(name.clone()));
                }
            }
        }

        let mut stats = EdgeStats::default();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::EdgeOutOfRange(u, v));
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                stats.duplicates_merged += 1;
            }
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &set {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = Graph {
            num_nodes,
            edges: set.into_iter().collect(),
            adjacency,
            features,
            feature_names,
        };
        Ok((graph, stats))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.num_nodes && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// The same graph with feature names attached, checked as in [`Graph::new`].
    pub fn with_feature_names(self, names: Vec<String>) -> Result<Self, GraphError> {
        Graph::new(self.num_nodes, self.edges, self.features, Some(names)).map(|(g, _)| g)
    }

    pub fn node_features(&self, v: NodeId) -> &[f64] {
        self.features.row(v)
    }

    /// BFS layers around `v`: element `h - 1` holds the nodes at shortest-path
    /// distance exactly `h`, for `h` in `1..=max_hops`. Each layer is sorted.
    pub fn hop_layers(&self, v: NodeId, max_hops: usize) -> Result<Vec<Vec<NodeId>>, GraphError> {
        if v >= self.num_nodes {
            return Err(GraphError::InvalidNode(v));
        }
        if max_hops == 0 {
            return Err(GraphError::InvalidHop);
        }
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut layers = vec![Vec::new(); max_hops];
        let mut queue = VecDeque::from([v]);
        dist[v] = 0;
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            if d == max_hops {
                continue;
            }
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = d + 1;
                    layers[d].push(w);
                    queue.push_back(w);
                }
            }
        }
        for layer in &mut layers {
            layer.sort_unstable();
        }
        Ok(layers)
    }

    /// Nodes at shortest-path distance exactly `h` from `v`, sorted.
    pub fn khop_nodes(&self, v: NodeId, h: usize) -> Result<Vec<NodeId>, GraphError> {
        let mut layers = self.hop_layers(v, h)?;
        Ok(layers.pop().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house() -> Graph {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 1), (4, 2)];
        Graph::new(5, edges, Matrix::filled(5, 1, 1.0), None).unwrap().0
    }

    #[test]
    fn khop_on_path() {
        let g = Graph::new(3, [(0, 1), (1, 2)], Matrix::filled(3, 1, 0.0), None)
            .unwrap()
            .0;
        assert_eq!(g.khop_nodes(0, 1).unwrap(), vec![1]);
        assert_eq!(g.khop_nodes(0, 2).unwrap(), vec![2]);
        assert!(g.khop_nodes(0, 3).unwrap().is_empty());
    }

    #[test]
    fn khop_isolated_node() {
        let g = Graph::new(2, [], Matrix::filled(2, 1, 0.0), None).unwrap().0;
        assert!(g.khop_nodes(1, 1).unwrap().is_empty());
    }

    #[test]
    fn khop_house_roof() {
        let g = house();
        assert_eq!(g.khop_nodes(4, 1).unwrap(), vec![1, 2]);
        assert_eq!(g.khop_nodes(4, 2).unwrap(), vec![0, 3]);
    }

    #[test]
    fn khop_rejects_bad_input() {
        let g = house();
        assert!(matches!(g.khop_nodes(5, 1), Err(GraphError::InvalidNode(5))));
        assert!(matches!(g.khop_nodes(0, 0), Err(GraphError::InvalidHop)));
    }

    #[test]
    fn self_loops_and_duplicates() {
        let (g, stats) = Graph::new(
            3,
            [(0, 0), (0, 1), (1, 0), (1, 2)],
            Matrix::filled(3, 2, 0.5),
            None,
        )
        .unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(stats.self_loops_dropped, 1);
        assert_eq!(stats.duplicates_merged, 1);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn feature_names_must_be_unique() {
        let err = Graph::new(
            1,
            [],
            Matrix::filled(1, 2, 0.0),
            Some(vec!["a".into(), "a".into()]),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateFeatureName(_)));
    }

    #[test]
    fn matrix_rejects_nan() {
        let err = Matrix::new(2, 2, vec![0.0, 1.0, f64::NAN, 2.0]).unwrap_err();
        assert!(matches!(err, GraphError::NonFiniteFeature { row: 1, col: 0 }));
    }

    #[test]
    fn labels_infer_class_count() {
        let p = PredictionVec::new(vec![0, 2, 1], None).unwrap();
        assert_eq!(p.num_classes(), 3);
        assert!(PredictionVec::new(vec![0, 3], Some(3)).is_err());
    }

    #[test]
    fn split_overlap_detected() {
        let split = Split {
            train: vec![1, 5],
            val: vec![],
            test: vec![5],
        };
        assert!(matches!(split.validate(10), Err(GraphError::SplitOverlap(5))));
        let empty = Split {
            train: vec![],
            val: vec![1],
            test: vec![],
        };
        assert!(matches!(empty.validate(10), Err(GraphError::EmptyTrain)));
    }

    #[test]
    fn graph_json_round_trip() {
        let g = house();
        let json = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
    }
}
