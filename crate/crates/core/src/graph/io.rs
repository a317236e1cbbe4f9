//! Plain-text and JSON loaders/writers for graphs, matrices, labels and splits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ClassId, EmbeddingMatrix, Graph, GraphError, Matrix, NodeId, PredictionVec, Split};

/// Edge clean-up counters reported by [`Graph::new`] and [`load_graph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), GraphError> {
    fs::write(path, contents).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a matrix file: a `<rows> <cols>` header followed by `rows` lines of
/// `cols` whitespace-separated reals.
pub fn load_matrix(path: &Path) -> Result<Matrix, GraphError> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "missing \"<rows> <cols>\" header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(path, hline, format!("bad header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(malformed(path, hline, "header must hold exactly two integers"));
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in lines {
        if seen_rows == rows {
            return Err(GraphError::DimensionMismatch(format!(
                "{}: more than {rows} rows (line {lineno})",
                path.display()
            )));
        }
        let before = data.len();
        for (col, tok) in line.split_whitespace().enumerate() {
            let value: f64 = tok
                .parse()
                .map_err(|_| malformed(path, lineno, format!("not a number: {tok:?}")))?;
            if !value.is_finite() {
                return Err(GraphError::NonFiniteFeature {
                    row: seen_rows,
                    col,
                });
            }
            data.push(value);
        }
        if data.len() - before != cols {
            return Err(GraphError::DimensionMismatch(format!(
                "{}:{lineno}: expected {cols} columns, found {}",
                path.display(),
                data.len() - before
            )));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(GraphError::DimensionMismatch(format!(
            "{}: header declares {rows} rows, found {seen_rows}",
            path.display()
        )));
    }
    Matrix::new(rows, cols, data)
}

/// One feature name per line.
pub fn load_feature_names(path: &Path) -> Result<Vec<String>, GraphError> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Loads an edge list plus its feature matrix. The feature matrix fixes the
/// node count; every edge endpoint must be below it.
///
/// `undirected = false` means each line is a directed arc. Arcs are
/// symmetrized, so `u v` and `v u` collapse into one stored edge.
pub fn load_graph(
    edges_path: &Path,
    features_path: &Path,
    undirected: bool,
) -> Result<(Graph, EdgeStats), GraphError> {
    let features = load_matrix(features_path)?;
    let num_nodes = features.rows();
    let text = read(edges_path)?;
    let mut edges = Vec::new();
    let mut reciprocal = 0usize;
    let mut directed_seen = std::collections::BTreeSet::new();
    for (lineno, line) in content_lines(&text) {
        let mut toks = line.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(malformed(edges_path, lineno, "expected two node ids"));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| malformed(edges_path, lineno, format!("not a node id: {t:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        for id in [u, v] {
            if id >= num_nodes {
                return Err(GraphError::NodeOutOfRange {
                    path: edges_path.to_path_buf(),
                    line: lineno,
                    id,
                    num_nodes,
                });
            }
        }
        if !undirected && u != v && directed_seen.insert((u, v)) && directed_seen.contains(&(v, u)) {
            reciprocal += 1;
        }
        edges.push((u, v));
    }
    let (graph, mut stats) = Graph::new(num_nodes, edges, features, None)?;
    // A reciprocal arc pair is one undirected edge, not a duplicate.
    stats.duplicates_merged -= reciprocal;
    if stats.self_loops_dropped > 0 {
        warn!(
            "{}: dropped {} self-loop(s)",
            edges_path.display(),
            stats.self_loops_dropped
        );
    }
    Ok((graph, stats))
}

/// One non-negative integer label per line; line `i` is node `i`.
pub fn load_labels(path: &Path, num_classes: Option<usize>) -> Result<PredictionVec, GraphError> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in content_lines(&text) {
        let value: i64 = line
            .parse()
            .map_err(|_| malformed(path, lineno, format!("not an integer label: {line:?}")))?;
        if value < 0 {
            return Err(GraphError::NegativeLabel {
                path: path.to_path_buf(),
                line: lineno,
                value,
            });
        }
        labels.push(value as ClassId);
    }
    PredictionVec::new(labels, num_classes)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, GraphError> {
    load_matrix(path).map(EmbeddingMatrix)
}

#[derive(Deserialize)]
struct SplitFile {
    train: Vec<NodeId>,
    val: Vec<NodeId>,
    test: Vec<NodeId>,
}

/// Loads and validates a `{"train": [...], "val": [...], "test": [...]}` file.
pub fn load_split(path: &Path, num_nodes: usize) -> Result<Split, GraphError> {
    let text = read(path)?;
    let raw: SplitFile = serde_json::from_str(&text).map_err(|source| GraphError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let split = Split {
        train: raw.train,
        val: raw.val,
        test: raw.test,
    };
    split.validate(num_nodes)?;
    Ok(split)
}

pub fn write_edges(graph: &Graph, path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    for &(u, v) in graph.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    write(path, &out)
}

pub fn write_matrix(matrix: &Matrix, path: &Path) -> Result<(), GraphError> {
    let mut out = format!("{} {}\n", matrix.rows(), matrix.cols());
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(i).iter().map(f64::to_string).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write(path, &out)
}

pub fn write_labels(preds: &PredictionVec, path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    for l in preds.labels() {
        let _ = writeln!(out, "{l}");
    }
    write(path, &out)
}

pub fn write_split(split: &Split, path: &Path) -> Result<(), GraphError> {
    let text = serde_json::to_string_pretty(split).map_err(|source| GraphError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn put(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_graph() {
        let dir = TempDir::new().unwrap();
        let e = put(&dir, "e.txt", "0 1\n1 2");
        let f = put(&dir, "f.txt", "3 2\n0 0\n1 1\n2 2\n");
        let (g, stats) = load_graph(&e, &f, true).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(stats, EdgeStats::default());
    }

    #[test]
    fn self_loop_dropped_and_counted() {
        let dir = TempDir::new().unwrap();
        let e = put(&dir, "e.txt", "# comment\n0 0\n0 1\n");
        let f = put(&dir, "f.txt", "2 1\n0\n1\n");
        let (g, stats) = load_graph(&e, &f, true).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(stats.self_loops_dropped, 1);
    }

    #[test]
    fn directed_reciprocal_arcs_are_one_edge() {
        let dir = TempDir::new().unwrap();
        let e = put(&dir, "e.txt", "0 1\n1 0\n0 1\n");
        let f = put(&dir, "f.txt", "2 1\n0\n1\n");
        let (g, stats) = load_graph(&e, &f, false).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(stats.duplicates_merged, 1);
        let (_, stats) = load_graph(&e, &f, true).unwrap();
        assert_eq!(stats.duplicates_merged, 2);
    }

    #[test]
    fn malformed_edge_line_reports_line() {
        let dir = TempDir::new().unwrap();
        let e = put(&dir, "e.txt", "0 1\n1 x\n");
        let f = put(&dir, "f.txt", "2 1\n0\n1\n");
        match load_graph(&e, &f, true).unwrap_err() {
            GraphError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn edge_endpoint_out_of_range() {
        let dir = TempDir::new().unwrap();
        let e = put(&dir, "e.txt", "0 1\n1 2\n");
        let f = put(&dir, "f.txt", "2 1\n0\n1\n");
        assert!(matches!(
            load_graph(&e, &f, true).unwrap_err(),
            GraphError::NodeOutOfRange { id: 2, line: 2, .. }
        ));
    }

    #[test]
    fn nan_feature_rejected() {
        let dir = TempDir::new().unwrap();
        let f = put(&dir, "f.txt", "2 2\n0 1\n2 nan\n");
        assert!(matches!(
            load_matrix(&f).unwrap_err(),
            GraphError::NonFiniteFeature { row: 1, col: 1 }
        ));
    }

    #[test]
    fn matrix_dimension_checks() {
        let dir = TempDir::new().unwrap();
        let ok = put(&dir, "ok.txt", "3 2\n1 2\n3 4\n5 6\n");
        let m = load_matrix(&ok).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.get(2, 1), 6.0);
        let short = put(&dir, "short.txt", "3 2\n1 2\n3 4\n");
        assert!(matches!(load_matrix(&short), Err(GraphError::DimensionMismatch(_))));
        let wide = put(&dir, "wide.txt", "1 2\n1 2 3\n");
        assert!(matches!(load_matrix(&wide), Err(GraphError::DimensionMismatch(_))));
    }

    #[test]
    fn labels_and_negative_labels() {
        let dir = TempDir::new().unwrap();
        let l = put(&dir, "l.txt", "0\n2\n1\n");
        assert_eq!(load_labels(&l, None).unwrap().num_classes(), 3);
        assert_eq!(load_labels(&l, Some(5)).unwrap().num_classes(), 5);
        let bad = put(&dir, "bad.txt", "0\n-1\n");
        assert!(matches!(
            load_labels(&bad, None).unwrap_err(),
            GraphError::NegativeLabel { line: 2, value: -1, .. }
        ));
    }

    #[test]
    fn split_overlap_rejected() {
        let dir = TempDir::new().unwrap();
        let s = put(&dir, "s.json", r#"{"train":[1,5],"val":[2],"test":[5]}"#);
        assert!(matches!(load_split(&s, 10), Err(GraphError::SplitOverlap(5))));
        let ok = put(&dir, "ok.json", r#"{"train":[1,5],"val":[2],"test":[3]}"#);
        assert_eq!(load_split(&ok, 10).unwrap().test, vec![3]);
    }

    #[test]
    fn write_then_load_round_trip() {
        let dir = TempDir::new().unwrap();
        let features = Matrix::from_rows(&[vec![0.1, -2.5], vec![1e-7, 3.0], vec![0.3, 0.0]]).unwrap();
        let (g, _) = Graph::new(3, [(0, 2), (1, 2)], features, None).unwrap();
        let e = dir.path().join("e.txt");
        let f = dir.path().join("f.txt");
        write_edges(&g, &e).unwrap();
        write_matrix(g.features(), &f).unwrap();
        let (back, _) = load_graph(&e, &f, true).unwrap();
        assert_eq!(g, back);
    }
}
