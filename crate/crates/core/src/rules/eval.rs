use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Field, NumExpr, RuleAst};
use crate::summary::NodeSummary;

/// Dimensions a rule's field references must fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub num_features: usize,
    pub hops: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("feature index {index} out of range for {num_features} features")]
    Feature { index: usize, num_features: usize },
    #[error("hop {hop} outside 1..={hops}")]
    Hop { hop: usize, hops: usize },
    #[error("class {class} out of range for {num_classes} classes")]
    Class { class: usize, num_classes: usize },
}

fn check_field(field: Field, s: &Schema) -> Result<(), ValidationError> {
    let hop_ok = |hop: usize| {
        if hop == 0 || hop > s.hops {
            Err(ValidationError::Hop { hop, hops: s.hops })
        } else {
            Ok(())
        }
    };
    let feat_ok = |index: usize| {
        if index >= s.num_features {
            Err(ValidationError::Feature {
                index,
                num_features: s.num_features,
            })
        } else {
            Ok(())
        }
    };
    match field {
        Field::Feat(i) => feat_ok(i),
        Field::Freq { hop, class } => {
            hop_ok(hop)?;
            if class >= s.num_classes {
                return Err(ValidationError::Class {
                    class,
                    num_classes: s.num_classes,
                });
            }
            Ok(())
        }
        Field::L1 { hop, attr } => {
            hop_ok(hop)?;
            feat_ok(attr)
        }
        Field::Degree => Ok(()),
    }
}

fn validate_num(e: &NumExpr, s: &Schema) -> Result<(), ValidationError> {
    match e {
        NumExpr::Lit(_) => Ok(()),
        NumExpr::Field(f) => check_field(*f, s),
        NumExpr::Indicator(b) => validate(b, s),
        NumExpr::Add(a, b) | NumExpr::Sub(a, b) | NumExpr::Mul(a, b) => {
            validate_num(a, s)?;
            validate_num(b, s)
        }
    }
}

/// Checks every field reference against the schema.
pub fn validate(ast: &RuleAst, schema: &Schema) -> Result<(), ValidationError> {
    match ast {
        RuleAst::Const(_) => Ok(()),
        RuleAst::Cmp(_, a, b) => {
            validate_num(a, schema)?;
            validate_num(b, schema)
        }
        RuleAst::And(a, b) | RuleAst::Or(a, b) => {
            validate(a, schema)?;
            validate(b, schema)
        }
        RuleAst::Not(a) => validate(a, schema),
    }
}

fn field_value(field: Field, s: &NodeSummary) -> Option<f64> {
    match field {
        Field::Feat(i) => s.feature(i),
        Field::Freq { hop, class } => s.freq(hop, class),
        Field::L1 { hop, attr } => s.l1(hop, attr),
        Field::Degree => Some(s.degree as f64),
    }
}

/// Value of a numeric expression, or `None` when it depends on data the
/// summary does not have (an empty hop, or an index beyond its dimensions).
pub fn eval_num(e: &NumExpr, s: &NodeSummary) -> Option<f64> {
    match e {
        NumExpr::Lit(x) => Some(*x),
        NumExpr::Field(f) => field_value(*f, s),
        NumExpr::Indicator(b) => Some(if eval_rule(b, s) { 1.0 } else { 0.0 }),
        NumExpr::Add(a, b) => Some(eval_num(a, s)? + eval_num(b, s)?),
        NumExpr::Sub(a, b) => Some(eval_num(a, s)? - eval_num(b, s)?),
        NumExpr::Mul(a, b) => Some(eval_num(a, s)? * eval_num(b, s)?),
    }
}

/// Truth value of a rule on a summary. A comparison involving absent data
/// is false; the boolean connectives then apply as usual.
pub fn eval_rule(ast: &RuleAst, s: &NodeSummary) -> bool {
    match ast {
        RuleAst::Const(b) => *b,
        RuleAst::Cmp(op, a, b) => match (eval_num(a, s), eval_num(b, s)) {
            (Some(x), Some(y)) => op.apply(x, y),
            _ => false,
        },
        RuleAst::And(a, b) => eval_rule(a, s) && eval_rule(b, s),
        RuleAst::Or(a, b) => eval_rule(a, s) || eval_rule(b, s),
        RuleAst::Not(a) => !eval_rule(a, s),
    }
}
