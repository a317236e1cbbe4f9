//! Prompt text for the generate, feedback and refine steps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::RuleAst;
use crate::summary::{NodeSummary, RenderOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Query,
    Feedback,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} prompt needs `{field}`")]
pub struct PromptError {
    pub kind: PromptKind,
    pub field: &'static str,
}

/// One past iteration as shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub formula: String,
    pub pos_acc: f64,
    pub neg_acc: f64,
    pub feedback: String,
}

/// Everything a prompt may draw on. Each kind checks for what it needs.
#[derive(Debug, Clone, Default)]
pub struct PromptContext<'a> {
    pub exemplar: Option<&'a NodeSummary>,
    pub positives: &'a [&'a NodeSummary],
    pub negatives: &'a [&'a NodeSummary],
    pub current_rule: Option<&'a RuleAst>,
    pub false_negatives: &'a [&'a NodeSummary],
    pub false_positives: &'a [&'a NodeSummary],
    pub history: &'a [HistoryEntry],
    pub target_accuracy: Option<f64>,
    pub feature_names: Option<&'a [String]>,
    pub render: RenderOptions,
}

const QUERY_TASK: &str = "\
An exemplar node is listed below together with sample nodes from its Rev-k-NN set, \
as computed from a GNN embedding, and sample nodes outside that set. Write an INITIAL \
rule-based formula that is true for the Rev-k-NN set nodes and false for the other nodes. \
Tailor it to this exemplar and its Rev-k-NN set instead of writing a generic rule. Only \
node features and the neighborhood statistics shown may be used; look for what the \
Rev-k-NN set nodes share with the exemplar and the other nodes lack.";

const FEEDBACK_TASK: &str = "\
List the conditions you would add, drop or adjust so that these mistakes disappear \
without breaking the nodes that are already handled correctly. Finish with the one \
change you consider most important. Reply with feedback only, no formula.";

const GRAMMAR: &str = "\
Formulas use this grammar (keywords AND, OR, NOT; comparisons <, <=, >, >=, ==, !=):
  rule   := or
  or     := and { OR and }
  and    := not { AND not }
  not    := { NOT } atom
  atom   := TRUE | FALSE | ( or ) | num op num
  num    := term { (+ | -) term }
  term   := factor { * factor }
  factor := [-] decimal | feat[i] | hop(h).freq(c) | hop(h).l1(i) | degree | I( or ) | ( num )
feat[i] is feature i of the node. hop(h).freq(c) is the fraction of nodes at distance h \
predicted as class c. hop(h).l1(i) is the mean absolute difference in feature i between \
the exemplar and the nodes at distance h. degree is the number of neighbors. I(b) is 1 \
when b holds and 0 otherwise. Any comparison that reads an empty hop is false.";

fn json_reply(what: &str) -> String {
    format!(
        "Reply with a JSON object whose \"rules\" list holds {what} and whose \
         \"interpretation\" string explains the formula in plain language."
    )
}

fn py_ids(nodes: &[&NodeSummary]) -> String {
    let ids: Vec<String> = nodes.iter().map(|s| s.node_id.to_string()).collect();
    format!("[{}]", ids.join(", "))
}

fn push_nodes(out: &mut String, nodes: &[&NodeSummary], opts: &RenderOptions, spaced: bool) {
    if nodes.is_empty() {
        out.push_str("None.\n");
        return;
    }
    for (i, s) in nodes.iter().enumerate() {
        if spaced && i > 0 {
            out.push('\n');
        }
        writeln!(out, "Node {}: {}", s.node_id, s.render_inline(opts)).unwrap();
    }
}

fn push_feature_names(out: &mut String, names: Option<&[String]>) {
    if let Some(names) = names {
        let quoted: Vec<String> = names.iter().map(|n| format!("'{n}'")).collect();
        writeln!(out, "Feature names, by index: [{}]", quoted.join(", ")).unwrap();
    }
}

fn percent(x: f64) -> String {
    let p = (x * 10_000.0).round() / 100.0;
    p.to_string()
}

fn query(ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let missing = |field| PromptError {
        kind: PromptKind::Query,
        field,
    };
    let exemplar = ctx.exemplar.ok_or(missing("exemplar"))?;
    if ctx.positives.is_empty() {
        return Err(missing("positives"));
    }
    if ctx.negatives.is_empty() {
        return Err(missing("negatives"));
    }
    let opts = &ctx.render;
    let mut out = String::new();
    writeln!(out, "{QUERY_TASK}\n").unwrap();
    writeln!(out, "{}", json_reply("exactly one formula string")).unwrap();
    writeln!(out, "{GRAMMAR}").unwrap();
    push_feature_names(&mut out, ctx.feature_names);
    writeln!(out).unwrap();
    writeln!(out, "Exemplar node: {}", exemplar.node_id).unwrap();
    writeln!(out, "Exemplar node description:").unwrap();
    writeln!(out, "{}", exemplar.render_block(opts)).unwrap();
    writeln!(out, "Rev-k-NN set nodes: {}", py_ids(ctx.positives)).unwrap();
    writeln!(out, "Non-Rev-k-NN set nodes: {}", py_ids(ctx.negatives)).unwrap();
    writeln!(out, "\nDescriptions of Rev-k-NN set nodes:\n").unwrap();
    push_nodes(&mut out, ctx.positives, opts, true);
    writeln!(out, "\nDescriptions of non-Rev-k-NN set nodes:\n").unwrap();
    push_nodes(&mut out, ctx.negatives, opts, true);
    Ok(out)
}

fn feedback(ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let rule = ctx.current_rule.ok_or(PromptError {
        kind: PromptKind::Feedback,
        field: "current_rule",
    })?;
    let opts = &ctx.render;
    let mut out = String::new();
    writeln!(out, "Below is the CURRENT formula:\n{rule}\n").unwrap();
    writeln!(
        out,
        "The formula was applied to the Rev-k-NN set nodes (target 1) and the non-Rev-k-NN \
         set nodes (target 0). It yielded {} false negatives and {} false positives.\n",
        ctx.false_negatives.len(),
        ctx.false_positives.len()
    )
    .unwrap();
    writeln!(out, "False Negatives (Rev-k-NN set nodes misclassified as non-Rev-k-NN set):").unwrap();
    push_nodes(&mut out, ctx.false_negatives, opts, false);
    writeln!(out, "\nFalse Positives (non-Rev-k-NN set nodes misclassified as Rev-k-NN set):").unwrap();
    push_nodes(&mut out, ctx.false_positives, opts, false);
    writeln!(out, "\n{FEEDBACK_TASK}").unwrap();
    Ok(out)
}

fn refine(ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let missing = |field| PromptError {
        kind: PromptKind::Refine,
        field,
    };
    if ctx.history.is_empty() {
        return Err(missing("history"));
    }
    let target = ctx.target_accuracy.ok_or(missing("target_accuracy"))?;
    let exact = RenderOptions {
        detail: false,
        decimals: None,
    };
    let mut out = String::new();
    writeln!(out, "Below is the history of previous iterations:").unwrap();
    for (i, h) in ctx.history.iter().enumerate() {
        if i > 0 {
            writeln!(out).unwrap();
        }
        writeln!(out, "Iteration {i}:\nFormula:\n\n{}\n", h.formula).unwrap();
        writeln!(
            out,
            " Positives Accuracy: {}, Negatives Accuracy: {}",
            exact.py_float(h.pos_acc),
            exact.py_float(h.neg_acc)
        )
        .unwrap();
        writeln!(out, "Actionable Feedback:\n{}", h.feedback).unwrap();
    }
    writeln!(
        out,
        "\nTaking the history and the latest feedback into account, write a REVISED formula \
         that fixes the reported problems. Aim for at least {}% accuracy on the Rev-k-NN set \
         nodes and on the other nodes alike.",
        percent(target)
    )
    .unwrap();
    writeln!(out, "{}", json_reply("exactly one formula string")).unwrap();
    writeln!(out, "{GRAMMAR}").unwrap();
    push_feature_names(&mut out, ctx.feature_names);
    Ok(out)
}

/// Renders the prompt of the given kind. Output depends only on the
/// context, so identical inputs give identical text.
pub fn render_prompt(kind: PromptKind, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    match kind {
        PromptKind::Query => query(ctx),
        PromptKind::Feedback => feedback(ctx),
        PromptKind::Refine => refine(ctx),
    }
}

/// Prompt asking for one class-level paragraph from per-exemplar texts.
pub fn render_combine_prompt(class_name: &str, texts: &[(usize, String)]) -> String {
    let mut out = format!(
        "The descriptions below each characterize one group of nodes that a GNN assigns to \
         class {class_name}. A node belongs to the class when any one of them applies. Merge \
         them into a single paragraph that keeps every alternative and names each exemplar \
         by its node id. Reply with the paragraph only.\n\n"
    );
    for (exemplar, text) in texts {
        writeln!(out, "Exemplar {exemplar}: {text}").unwrap();
    }
    out
}
