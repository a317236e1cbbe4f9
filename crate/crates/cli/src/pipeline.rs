//! Pipeline stages and their JSON artifacts.

use std::fmt::Display;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xemplar_core::coverage::{select_all, ExemplarSet};
use xemplar_core::eval::{evaluate_class, macro_report, render_explanations, Report, RunContext};
use xemplar_core::graph::{
    generate_ba_shapes, load_embeddings, load_feature_names, load_graph, load_labels, load_split,
    mock_embed, random_split, write_edges, write_labels, write_matrix, write_split, EdgeStats,
    EmbeddingMatrix, Graph, PredictionVec, Split,
};
use xemplar_core::knn::{rev_knn_exact, rev_knn_sampled, sample_size, RevKnnIndex, SamplingParams};
use xemplar_core::rules::{assemble_class, ClassExplanation, Schema};
use xemplar_core::summary::{build_bundles, SampleBundle};
use xemplar_core::synth::{
    combine_text, synthesize_signature, BackendKind, IterationRecord, LlmBackend, LlmClient,
    OfflineBackend, SynthBackend, SynthError,
};
use xemplar_core::{ClassId, NodeId};

use crate::config::{EvalNodes, PipelineConfig};
use crate::CliError;

pub const SYNTH_LOG: &str = "synth_log.jsonl";
pub const EXPLANATIONS: &str = "explanations.txt";
const LOCK_FILE: &str = ".xemplar.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Rknn,
    Exemplars,
    Summaries,
    Synth,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Rknn,
        Stage::Exemplars,
        Stage::Summaries,
        Stage::Synth,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Rknn => "rknn",
            Stage::Exemplars => "exemplars",
            Stage::Summaries => "summaries",
            Stage::Synth => "synth",
            Stage::Eval => "eval",
        }
    }

    /// The JSON file the stage writes.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => "dataset.json",
            Stage::Rknn => "index.json",
            Stage::Exemplars => "exemplars.json",
            Stage::Summaries => "bundles.json",
            Stage::Synth => "signatures.json",
            Stage::Eval => "report.json",
        }
    }
}

fn fail<E: Display>(stage: Stage) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Stage {
        stage: stage.name(),
        message: e.to_string(),
    }
}

/// Exclusive hold on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n")
        .and_then(|()| w.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads the artifact written by `stage`.
pub fn read_artifact<T: DeserializeOwned>(dir: &Path, stage: Stage) -> Result<T, CliError> {
    let path = dir.join(stage.artifact());
    if !path.exists() {
        return Err(CliError::MissingArtifact(stage.name()));
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Validated inputs, as stored after ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub graph: Graph,
    pub predictions: PredictionVec,
    pub embeddings: EmbeddingMatrix,
    pub split: Split,
    pub edge_stats: EdgeStats,
}

fn required<'a>(p: &'a Option<PathBuf>, field: &'static str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or(CliError::MissingField(field))
}

pub fn ingest(cfg: &PipelineConfig) -> Result<Dataset, CliError> {
    let p = &cfg.paths;
    let edges = required(&p.edges, "paths.edges")?;
    let features = required(&p.features, "paths.features")?;
    let embeddings = required(&p.embeddings, "paths.embeddings")?;
    let predictions = required(&p.predictions, "paths.predictions")?;
    let split = required(&p.split, "paths.split")?;
    let err = fail(Stage::Ingest);

    let (mut graph, edge_stats) = load_graph(edges, features, cfg.undirected).map_err(fail(Stage::Ingest))?;
    if let Some(names) = &p.feature_names {
        let names = load_feature_names(names).map_err(fail(Stage::Ingest))?;
        graph = graph.with_feature_names(names).map_err(fail(Stage::Ingest))?;
    }
    let n = graph.num_nodes();
    let embeddings = load_embeddings(embeddings).map_err(fail(Stage::Ingest))?;
    let predictions = load_labels(predictions, cfg.num_classes).map_err(fail(Stage::Ingest))?;
    if embeddings.num_nodes() != n || predictions.len() != n {
        return Err(err(format!(
            "graph has {n} nodes but embeddings have {} rows and predictions {} entries",
            embeddings.num_nodes(),
            predictions.len()
        )));
    }
    let split = load_split(split, n).map_err(fail(Stage::Ingest))?;
    Ok(Dataset {
        graph,
        predictions,
        embeddings,
        split,
        edge_stats,
    })
}

pub fn rknn(cfg: &PipelineConfig, data: &Dataset) -> Result<RevKnnIndex, CliError> {
    let err = fail(Stage::Rknn);
    let z = match (cfg.z, cfg.theta, cfg.delta) {
        (Some(z), _, _) => Some(z),
        (None, Some(theta), Some(delta)) => Some(
            sample_size(&SamplingParams {
                theta,
                delta,
                seed: cfg.seed,
            })
            .map_err(fail(Stage::Rknn))?,
        ),
        _ => None,
    };
    let (emb, preds, train) = (&data.embeddings, &data.predictions, &data.split.train);
    match z {
        // enough queries to cover the train set: the exact index is the same thing
        Some(z) if z < train.len() => {
            info!("rknn: sampling {z} of {} train nodes", train.len());
            rev_knn_sampled(emb, preds, train, cfg.k, z, cfg.seed).map_err(err)
        }
        _ => rev_knn_exact(emb, preds, train, cfg.k).map_err(err),
    }
}

pub fn exemplars(cfg: &PipelineConfig, index: &RevKnnIndex) -> Result<Vec<ExemplarSet>, CliError> {
    select_all(index, cfg.budget, cfg.target_coverage).map_err(fail(Stage::Exemplars))
}

pub fn summaries(
    cfg: &PipelineConfig,
    data: &Dataset,
    index: &RevKnnIndex,
    sets: &[ExemplarSet],
) -> Result<Vec<SampleBundle>, CliError> {
    let exemplars: Vec<NodeId> = sets.iter().flat_map(|s| s.exemplars.iter().copied()).collect();
    build_bundles(
        &data.graph,
        &data.predictions,
        index,
        &exemplars,
        cfg.synth.n_each,
        cfg.synth.split_ratio,
        cfg.hops,
        cfg.seed,
    )
    .map_err(fail(Stage::Summaries))
}

fn backend(cfg: &PipelineConfig, feature_names: Option<Vec<String>>) -> Result<Box<dyn SynthBackend>, CliError> {
    Ok(match cfg.synth.backend {
        BackendKind::Offline => Box::new(OfflineBackend::new(cfg.synth.max_terms, feature_names)),
        BackendKind::Llm => {
            let endpoint = cfg
                .synth
                .llm_endpoint
                .as_deref()
                .ok_or(CliError::MissingField("synth.llm_endpoint"))?;
            let model = cfg
                .synth
                .llm_model
                .as_deref()
                .ok_or(CliError::MissingField("synth.llm_model"))?;
            let client = LlmClient::new(endpoint, model, cfg.synth.llm.clone()).map_err(fail(Stage::Synth))?;
            Box::new(LlmBackend::new(client, feature_names))
        }
    })
}

fn class_name(cfg: &PipelineConfig, c: ClassId) -> String {
    cfg.class_names
        .as_ref()
        .and_then(|n| n.get(c).cloned())
        .unwrap_or_else(|| c.to_string())
}

fn write_log(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// Synthesizes one signature per bundle and assembles them per class.
/// Every iteration record, including partial histories of failed runs, is
/// written to `log_path` when given.
pub fn synth(
    cfg: &PipelineConfig,
    data: &Dataset,
    bundles: &[SampleBundle],
    log_path: Option<&Path>,
) -> Result<Vec<ClassExplanation>, CliError> {
    let graph = &data.graph;
    let preds = &data.predictions;
    let names = graph.feature_names().map(<[String]>::to_vec);
    let backend = backend(cfg, names.clone())?;
    let schema = Schema {
        num_features: graph.feature_dim(),
        hops: cfg.hops,
        num_classes: preds.num_classes(),
    };
    let outcomes: Vec<_> = bundles
        .par_iter()
        .map(|b| {
            let class = preds.class_of(b.exemplar);
            synthesize_signature(b, class, &schema, &cfg.synth, backend.as_ref(), names.as_deref())
        })
        .collect();

    let mut log = Vec::new();
    let mut first_err = None;
    let mut by_class: std::collections::BTreeMap<ClassId, Vec<_>> = Default::default();
    for out in outcomes {
        match out {
            Ok(o) => {
                log.extend(o.history);
                by_class.entry(o.signature.class_id).or_default().push(o.signature);
            }
            Err(SynthError::Backend {
                exemplar,
                source,
                history,
            }) => {
                log.extend(history);
                first_err.get_or_insert(format!("exemplar {exemplar}: {source}"));
            }
            Err(e) => {
                first_err.get_or_insert(e.to_string());
            }
        }
    }
    if let Some(path) = log_path {
        write_log(path, &log)?;
    }
    if let Some(e) = first_err {
        return Err(fail(Stage::Synth)(e));
    }

    let mut explanations = Vec::new();
    for (c, sigs) in by_class {
        let texts: Vec<(NodeId, String)> = sigs.iter().map(|s| (s.exemplar, s.text.clone())).collect();
        let mut expl = assemble_class(sigs).map_err(fail(Stage::Synth))?;
        let combined = combine_text(backend.as_ref(), &texts, &class_name(cfg, c));
        expl.combined_text = combined.text;
        expl.text_fallback = combined.fallback;
        explanations.push(expl);
    }
    Ok(explanations)
}

fn eval_nodes(cfg: &PipelineConfig, data: &Dataset) -> Vec<NodeId> {
    let split = &data.split;
    match cfg.eval.nodes {
        EvalNodes::Test => split.test.clone(),
        EvalNodes::Val => split.val.clone(),
        EvalNodes::Heldout => {
            let train: std::collections::BTreeSet<NodeId> = split.train.iter().copied().collect();
            (0..data.graph.num_nodes()).filter(|v| !train.contains(v)).collect()
        }
        EvalNodes::All => (0..data.graph.num_nodes()).collect(),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Scores every class explanation. Returns the report and the plain-text
/// explanation block.
pub fn evaluate(
    cfg: &PipelineConfig,
    data: &Dataset,
    explanations: &[ClassExplanation],
    started_at: u64,
) -> Result<(Report, String), CliError> {
    let err = fail(Stage::Eval);
    let nodes = eval_nodes(cfg, data);
    if nodes.is_empty() {
        return Err(err(format!("no {:?} nodes to evaluate on", cfg.eval.nodes)));
    }
    let core = cfg.eval.core();
    let metrics = explanations
        .iter()
        .map(|e| evaluate_class(e, &data.graph, &data.predictions, &nodes, cfg.hops, &core, cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail(Stage::Eval))?;
    let mut ctx = RunContext::from_explanations(explanations);
    ctx.config = serde_json::to_value(cfg).map_err(fail(Stage::Eval))?;
    ctx.seeds.insert("seed".into(), cfg.seed);
    ctx.started_at = Some(started_at);
    ctx.finished_at = Some(unix_now());
    let report = macro_report(metrics, ctx).map_err(fail(Stage::Eval))?;
    let text = render_explanations(explanations, cfg.class_names.as_deref());
    Ok((report, text))
}

fn timed<T>(stage: Stage, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    let start = Instant::now();
    info!("{}: started", stage.name());
    let out = f()?;
    info!("{}: done in {:.2?}", stage.name(), start.elapsed());
    Ok(out)
}

pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data = timed(Stage::Ingest, || ingest(cfg))?;
    write_json(dir, Stage::Ingest.artifact(), &data)
}

pub fn cmd_rknn(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data: Dataset = read_artifact(dir, Stage::Ingest)?;
    let index = timed(Stage::Rknn, || rknn(cfg, &data))?;
    write_json(dir, Stage::Rknn.artifact(), &index)
}

pub fn cmd_exemplars(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let index: RevKnnIndex = read_artifact(dir, Stage::Rknn)?;
    let sets = timed(Stage::Exemplars, || exemplars(cfg, &index))?;
    write_json(dir, Stage::Exemplars.artifact(), &sets)
}

pub fn cmd_summaries(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data: Dataset = read_artifact(dir, Stage::Ingest)?;
    let index: RevKnnIndex = read_artifact(dir, Stage::Rknn)?;
    let sets: Vec<ExemplarSet> = read_artifact(dir, Stage::Exemplars)?;
    let bundles = timed(Stage::Summaries, || summaries(cfg, &data, &index, &sets))?;
    write_json(dir, Stage::Summaries.artifact(), &bundles)
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data: Dataset = read_artifact(dir, Stage::Ingest)?;
    let bundles: Vec<SampleBundle> = read_artifact(dir, Stage::Summaries)?;
    let expls = timed(Stage::Synth, || synth(cfg, &data, &bundles, Some(&dir.join(SYNTH_LOG))))?;
    write_json(dir, Stage::Synth.artifact(), &expls)
}

fn write_report(dir: &Path, report: &Report, text: &str) -> Result<(), CliError> {
    write_json(dir, Stage::Eval.artifact(), report)?;
    let path = dir.join(EXPLANATIONS);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_eval(cfg: &PipelineConfig) -> Result<(), CliError> {
    let started = unix_now();
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data: Dataset = read_artifact(dir, Stage::Ingest)?;
    let expls: Vec<ClassExplanation> = read_artifact(dir, Stage::Synth)?;
    let (report, text) = timed(Stage::Eval, || evaluate(cfg, &data, &expls, started))?;
    write_report(dir, &report, &text)
}

/// Runs every stage in order, writing each artifact. Returns the report.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<Report, CliError> {
    let started = unix_now();
    let dir = cfg.output_dir()?;
    let _lock = OutputLock::acquire(dir)?;
    let data = timed(Stage::Ingest, || ingest(cfg))?;
    write_json(dir, Stage::Ingest.artifact(), &data)?;
    let index = timed(Stage::Rknn, || rknn(cfg, &data))?;
    write_json(dir, Stage::Rknn.artifact(), &index)?;
    let sets = timed(Stage::Exemplars, || exemplars(cfg, &index))?;
    write_json(dir, Stage::Exemplars.artifact(), &sets)?;
    let bundles = timed(Stage::Summaries, || summaries(cfg, &data, &index, &sets))?;
    write_json(dir, Stage::Summaries.artifact(), &bundles)?;
    let expls = timed(Stage::Synth, || synth(cfg, &data, &bundles, Some(&dir.join(SYNTH_LOG))))?;
    write_json(dir, Stage::Synth.artifact(), &expls)?;
    let (report, text) = timed(Stage::Eval, || evaluate(cfg, &data, &expls, started))?;
    write_report(dir, &report, &text)?;
    Ok(report)
}

/// Writes a BA-Shapes dataset to the input paths named in the config.
pub fn cmd_gen_synthetic(cfg: &PipelineConfig) -> Result<(), CliError> {
    let p = &cfg.paths;
    let s = &cfg.synthetic;
    let edges = required(&p.edges, "paths.edges")?;
    let features = required(&p.features, "paths.features")?;
    let embeddings = required(&p.embeddings, "paths.embeddings")?;
    let predictions = required(&p.predictions, "paths.predictions")?;
    let split_path = required(&p.split, "paths.split")?;
    let gen = |e: xemplar_core::graph::GraphError| CliError::Stage {
        stage: "gen-synthetic",
        message: e.to_string(),
    };
    let (graph, labels) = generate_ba_shapes(cfg.seed, s.backbone_n, s.num_motifs, s.random_edge_frac).map_err(gen)?;
    let emb = mock_embed(&graph, &labels, cfg.hops, s.noise, cfg.seed).map_err(gen)?;
    let split = random_split(graph.num_nodes(), s.train_frac, s.val_frac, cfg.seed).map_err(gen)?;
    for path in [edges, features, embeddings, predictions, split_path] {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    write_edges(&graph, edges).map_err(gen)?;
    write_matrix(graph.features(), features).map_err(gen)?;
    write_matrix(&emb.0, embeddings).map_err(gen)?;
    write_labels(&labels, predictions).map_err(gen)?;
    write_split(&split, split_path).map_err(gen)?;
    if let (Some(path), Some(names)) = (&p.feature_names, graph.feature_names()) {
        let mut text = names.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
