//! Synthetic BA-Shapes graphs and a label-histogram stand-in for a trained
//! model's embeddings.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ClassId, EmbeddingMatrix, Graph, GraphError, Matrix, NodeId, PredictionVec, Split};

/// Edges added per new backbone node by preferential attachment.
pub const BA_ATTACHMENT: usize = 5;

pub const ROLE_BACKGROUND: ClassId = 0;
pub const ROLE_BASE: ClassId = 1;
pub const ROLE_MIDDLE: ClassId = 2;
pub const ROLE_TIP: ClassId = 3;

/// House motif: square 0-1-2-3 with roof node 4 joined to 1 and 2.
const HOUSE_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 1), (4, 2)];
const HOUSE_ROLES: [ClassId; 5] = [ROLE_BASE, ROLE_MIDDLE, ROLE_MIDDLE, ROLE_BASE, ROLE_TIP];

/// Barabási–Albert backbone. The first `m` nodes are the initial targets;
/// each later node attaches to `m` distinct targets drawn proportionally to
/// degree. Produces exactly `(n - m) * m` edges when `n > m`.
fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    let mut targets: Vec<NodeId> = (0..m.min(n)).collect();
    let mut repeated: Vec<NodeId> = Vec::new();
    for source in m..n {
        for &t in &targets {
            edges.push((source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
        let mut next = Vec::with_capacity(m);
        while next.len() < m {
            let pick = repeated[rng.random_range(0..repeated.len())];
            if !next.contains(&pick) {
                next.push(pick);
            }
        }
        targets = next;
    }
    edges
}

/// Builds a BA-Shapes graph: a preferential-attachment backbone of
/// `backbone_n` nodes, `num_motifs` house motifs each linked to a random
/// backbone node through one of its base nodes, then
/// `round(random_edge_frac * total_nodes)` extra random edges.
///
/// Returns the graph (one constant feature per node) and the role labels:
/// background 0, base 1, middle 2, tip 3.
pub fn generate_ba_shapes(
    seed: u64,
    backbone_n: usize,
    num_motifs: usize,
    random_edge_frac: f64,
) -> Result<(Graph, PredictionVec), GraphError> {
    if backbone_n < BA_ATTACHMENT {
        return Err(GraphError::InvalidParameter(format!(
            "backbone_n must be at least {BA_ATTACHMENT}, got {backbone_n}"
        )));
    }
    if !(random_edge_frac >= 0.0 && random_edge_frac.is_finite()) {
        return Err(GraphError::InvalidParameter(format!(
            "random_edge_frac must be a non-negative fraction, got {random_edge_frac}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = backbone_n + 5 * num_motifs;

    let mut edges: BTreeSet<(NodeId, NodeId)> = barabasi_albert(backbone_n, BA_ATTACHMENT, &mut rng)
        .into_iter()
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    let mut labels = vec![ROLE_BACKGROUND; total];

    for motif in 0..num_motifs {
        let base = backbone_n + 5 * motif;
        for (local, &role) in HOUSE_ROLES.iter().enumerate() {
            labels[base + local] = role;
        }
        for &(a, b) in &HOUSE_EDGES {
            edges.insert((base + a, base + b));
        }
        let anchor = rng.random_range(0..backbone_n);
        edges.insert((anchor, base));
    }

    let extra = (random_edge_frac * total as f64).round() as usize;
    let max_edges = total * total.saturating_sub(1) / 2;
    if edges.len() + extra > max_edges {
        return Err(GraphError::InvalidParameter(format!(
            "cannot place {extra} extra edges in a graph of {total} nodes"
        )));
    }
    let mut added = 0;
    while added < extra {
        let u = rng.random_range(0..total);
        let v = rng.random_range(0..total);
        if u != v && edges.insert((u.min(v), u.max(v))) {
            added += 1;
        }
    }

    let (graph, _) = Graph::new(
        total,
        edges,
        Matrix::filled(total, 1, 1.0),
        Some(vec!["constant".to_owned()]),
    )?;
    let preds = PredictionVec::new(labels, Some(4))?;
    Ok((graph, preds))
}

/// Deterministic embedding that mimics what an `hops`-layer message-passing
/// model can see: for `h = 0..=hops`, the normalized class histogram of the
/// nodes at exact distance `h` (hop 0 is the node's own one-hot label), plus
/// Gaussian noise of standard deviation `noise_scale`.
pub fn mock_embed(
    graph: &Graph,
    labels: &PredictionVec,
    hops: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<EmbeddingMatrix, GraphError> {
    if hops == 0 {
        return Err(GraphError::InvalidHop);
    }
    if labels.len() != graph.num_nodes() {
        return Err(GraphError::DimensionMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            graph.num_nodes()
        )));
    }
    let classes = labels.num_classes();
    let dim = (hops + 1) * classes;
    let noise = (noise_scale > 0.0)
        .then(|| Normal::new(0.0, noise_scale))
        .transpose()
        .map_err(|e| GraphError::InvalidParameter(format!("noise_scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut data = vec![0.0; graph.num_nodes() * dim];
    for v in 0..graph.num_nodes() {
        let row = &mut data[v * dim..(v + 1) * dim];
        row[labels.class_of(v)] = 1.0;
        for (h, layer) in graph.hop_layers(v, hops)?.iter().enumerate() {
            if layer.is_empty() {
                continue;
            }
            let share = 1.0 / layer.len() as f64;
            for &u in layer {
                row[(h + 1) * classes + labels.class_of(u)] += share;
            }
        }
        if let Some(dist) = &noise {
            for x in row.iter_mut() {
                *x += dist.sample(&mut rng);
            }
        }
    }
    Ok(EmbeddingMatrix(Matrix::new(graph.num_nodes(), dim, data)?))
}

/// Random train/validation/test split: the first `round(train_frac * n)`
/// nodes of a seeded shuffle go to train, the next `round(val_frac * n)` to
/// validation, the rest to test. Each list is sorted.
pub fn random_split(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Split, GraphError> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    if !ok(train_frac) || !ok(val_frac) || train_frac + val_frac > 1.0 {
        return Err(GraphError::InvalidParameter(format!(
            "split fractions {train_frac} and {val_frac} must be non-negative and sum to at most 1"
        )));
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
    let part = |r: std::ops::Range<usize>| {
        let mut ids = order[r].to_vec();
        ids.sort_unstable();
        ids
    };
    let split = Split {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    };
    split.validate(n)?;
    Ok(split)
}
