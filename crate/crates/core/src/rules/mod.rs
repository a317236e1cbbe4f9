//! A small boolean rule language over node summaries.
//!
//! ```text
//! rule   := or
//! or     := and { "OR" and }
//! and    := not { "AND" not }
//! not    := { "NOT" } atom
//! atom   := "TRUE" | "FALSE" | "(" or ")" | cmp
//! cmp    := num op num          op := < | <= | > | >= | == | !=
//! num    := term { ("+" | "-") term }
//! term   := factor { "*" factor }
//! factor := ["-"] decimal | field | "I(" or ")" | "(" num ")"
//! field  := "feat[" uint "]" | "hop(" uint ").freq(" uint ")"
//!         | "hop(" uint ").l1(" uint ")" | "degree"
//! ```
//!
//! Keywords are case-insensitive. `I(b)` is 1 when `b` holds and 0
//! otherwise, which allows weighted scores such as
//! `0.5 * I(feat[0] > 1) + 0.5 * I(degree >= 3) >= 0.5`.
//!
//! Rules are printed fully parenthesized with canonical spacing, and the
//! printed form parses back to the same tree.

mod describe;
mod eval;
mod parse;
mod print;

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{ClassId, Graph, NodeId, PredictionVec};
use crate::summary::{summarize, NodeSummary, SummaryError};

pub use describe::describe_rule;
pub use eval::{eval_num, eval_rule, validate, Schema, ValidationError};
pub use parse::{parse_rule, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Feat(usize),
    Freq { hop: usize, class: ClassId },
    L1 { hop: usize, attr: usize },
    Degree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Lit(f64),
    Field(Field),
    Indicator(Box<RuleAst>),
    Add(Box<NumExpr>, Box<NumExpr>),
    Sub(Box<NumExpr>, Box<NumExpr>),
    Mul(Box<NumExpr>, Box<NumExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleAst {
    Const(bool),
    Cmp(CmpOp, NumExpr, NumExpr),
    And(Box<RuleAst>, Box<RuleAst>),
    Or(Box<RuleAst>, Box<RuleAst>),
    Not(Box<RuleAst>),
}

impl RuleAst {
    pub fn cmp(field: Field, op: CmpOp, value: f64) -> Self {
        RuleAst::Cmp(op, NumExpr::Field(field), NumExpr::Lit(value))
    }

    pub fn and(a: RuleAst, b: RuleAst) -> Self {
        RuleAst::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: RuleAst, b: RuleAst) -> Self {
        RuleAst::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: RuleAst) -> Self {
        RuleAst::Not(Box::new(a))
    }

    /// Number of comparisons in the tree.
    pub fn num_comparisons(&self) -> usize {
        match self {
            RuleAst::Const(_) => 0,
            RuleAst::Cmp(_, a, b) => 1 + a.num_comparisons() + b.num_comparisons(),
            RuleAst::And(a, b) | RuleAst::Or(a, b) => a.num_comparisons() + b.num_comparisons(),
            RuleAst::Not(a) => a.num_comparisons(),
        }
    }
}

impl NumExpr {
    fn num_comparisons(&self) -> usize {
        match self {
            NumExpr::Lit(_) | NumExpr::Field(_) => 0,
            NumExpr::Indicator(b) => b.num_comparisons(),
            NumExpr::Add(a, b) | NumExpr::Sub(a, b) | NumExpr::Mul(a, b) => {
                a.num_comparisons() + b.num_comparisons()
            }
        }
    }
}

impl std::str::FromStr for RuleAst {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rule(s)
    }
}

impl Serialize for RuleAst {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RuleAst {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_rule(&text).map_err(serde::de::Error::custom)
    }
}

/// Canonical text of a rule, same as its `Display`.
pub fn print_rule(ast: &RuleAst) -> String {
    ast.to_string()
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("no signatures to assemble")]
    NoSignatures,
    #[error("signature for exemplar {exemplar} belongs to class {found}, expected {expected}")]
    ClassMismatch {
        exemplar: NodeId,
        expected: ClassId,
        found: ClassId,
    },
    #[error("no summary referenced to exemplar {0}")]
    MissingSummary(NodeId),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// A rule approximating the model on one exemplar's reverse-kNN population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub exemplar: NodeId,
    pub class_id: ClassId,
    pub rule: RuleAst,
    pub text: String,
    pub val_accuracy: f64,
    pub iterations_used: usize,
}

/// Disjunction of the signatures of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassExplanation {
    pub class_id: ClassId,
    pub signatures: Vec<Signature>,
    pub combined_text: String,
    /// Set when `combined_text` is the plain join rather than a merged text.
    #[serde(default)]
    pub text_fallback: bool,
}

/// Joins per-exemplar texts into one disjunctive description.
pub fn join_texts<S: AsRef<str>>(texts: &[S]) -> String {
    texts
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("; or ")
}

/// Collects signatures of a single class into a [`ClassExplanation`] whose
/// text is the plain join of the signature texts.
pub fn assemble_class(signatures: Vec<Signature>) -> Result<ClassExplanation, RulesError> {
    let class_id = signatures.first().ok_or(RulesError::NoSignatures)?.class_id;
    if let Some(bad) = signatures.iter().find(|s| s.class_id != class_id) {
        return Err(RulesError::ClassMismatch {
            exemplar: bad.exemplar,
            expected: class_id,
            found: bad.class_id,
        });
    }
    let texts: Vec<&str> = signatures.iter().map(|s| s.text.as_str()).collect();
    Ok(ClassExplanation {
        class_id,
        combined_text: join_texts(&texts),
        text_fallback: false,
        signatures,
    })
}

/// True when any signature holds on the summary of the node referenced to
/// that signature's exemplar.
pub fn eval_class(
    expl: &ClassExplanation,
    summaries: &BTreeMap<NodeId, NodeSummary>,
) -> Result<bool, RulesError> {
    for sig in &expl.signatures {
        let summary = summaries
            .get(&sig.exemplar)
            .filter(|s| s.reference_exemplar == sig.exemplar)
            .ok_or(RulesError::MissingSummary(sig.exemplar))?;
        if eval_rule(&sig.rule, summary) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// [`eval_class`] on node `v`, computing the summaries it needs.
pub fn eval_class_node(
    expl: &ClassExplanation,
    graph: &Graph,
    preds: &PredictionVec,
    v: NodeId,
    hops: usize,
) -> Result<bool, RulesError> {
    for sig in &expl.signatures {
        let summary = summarize(graph, preds, sig.exemplar, v, hops)?;
        if eval_rule(&sig.rule, &summary) {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::HopSummary;

    fn sig(exemplar: NodeId, class_id: ClassId, rule: &str) -> Signature {
        Signature {
            exemplar,
            class_id,
            rule: rule.parse().unwrap(),
            text: format!("rule of {exemplar}"),
            val_accuracy: 1.0,
            iterations_used: 1,
        }
    }

    fn summary(v: NodeId, exemplar: NodeId, f0: f64) -> NodeSummary {
        NodeSummary {
            node_id: v,
            features: vec![f0],
            hops: vec![HopSummary {
                class_freq: BTreeMap::from([(0, 1.0)]),
                l1: Some(vec![0.0]),
            }],
            reference_exemplar: exemplar,
            degree: 1,
        }
    }

    #[test]
    fn disjunction_semantics() {
        let expl = assemble_class(vec![sig(1, 0, "FALSE"), sig(2, 0, "feat[0] > 1")]).unwrap();
        assert_eq!(expl.combined_text, "rule of 1; or rule of 2");
        let on = BTreeMap::from([(1, summary(9, 1, 5.0)), (2, summary(9, 2, 5.0))]);
        let off = BTreeMap::from([(1, summary(9, 1, 0.0)), (2, summary(9, 2, 0.0))]);
        assert!(eval_class(&expl, &on).unwrap());
        assert!(!eval_class(&expl, &off).unwrap());
    }

    #[test]
    fn summaries_must_match_exemplar() {
        let expl = assemble_class(vec![sig(1, 0, "TRUE")]).unwrap();
        let wrong = BTreeMap::from([(1, summary(9, 2, 0.0))]);
        assert!(matches!(
            eval_class(&expl, &wrong),
            Err(RulesError::MissingSummary(1))
        ));
    }

    #[test]
    fn assemble_checks_class() {
        assert!(matches!(assemble_class(vec![]), Err(RulesError::NoSignatures)));
        assert!(matches!(
            assemble_class(vec![sig(1, 0, "TRUE"), sig(2, 1, "TRUE")]),
            Err(RulesError::ClassMismatch { exemplar: 2, .. })
        ));
    }

    #[test]
    fn signature_json_uses_rule_text() {
        let s = sig(4, 1, "hop(1).freq(1) >= 0.70");
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["rule"], "hop(1).freq(1) >= 0.7");
        let back: Signature = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }
}
