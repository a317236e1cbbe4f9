//! Plain-English rendering of rules.

use super::{CmpOp, Field, NumExpr, RuleAst};

fn feature_name(i: usize, names: Option<&[String]>) -> String {
    match names.and_then(|n| n.get(i)) {
        Some(name) => format!("feature '{name}'"),
        None => format!("feature {i}"),
    }
}

fn ordinal_hop(h: usize) -> String {
    format!("{h}-hop")
}

fn field(f: Field, names: Option<&[String]>) -> String {
    match f {
        Field::Feat(i) => feature_name(i, names),
        Field::Freq { hop, class } => format!(
            "the share of {} neighbors predicted as class {class}",
            ordinal_hop(hop)
        ),
        Field::L1 { hop, attr } => format!(
            "the mean gap to the exemplar in {} over {} neighbors",
            feature_name(attr, names),
            ordinal_hop(hop)
        ),
        Field::Degree => "the degree".to_owned(),
    }
}

fn num(e: &NumExpr, names: Option<&[String]>) -> String {
    match e {
        NumExpr::Lit(x) => format!("{x}"),
        NumExpr::Field(f) => field(*f, names),
        NumExpr::Indicator(b) => format!("[1 if {}]", rule(b, names, false)),
        NumExpr::Add(a, b) => format!("({} plus {})", num(a, names), num(b, names)),
        NumExpr::Sub(a, b) => format!("({} minus {})", num(a, names), num(b, names)),
        NumExpr::Mul(a, b) => format!("{} times {}", num(a, names), num(b, names)),
    }
}

fn relation(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Lt => "is below",
        CmpOp::Le => "is at most",
        CmpOp::Gt => "is above",
        CmpOp::Ge => "is at least",
        CmpOp::Eq => "equals",
        CmpOp::Ne => "differs from",
    }
}

fn rule(ast: &RuleAst, names: Option<&[String]>, nested: bool) -> String {
    let wrap = |s: String| if nested { format!("({s})") } else { s };
    match ast {
        RuleAst::Const(true) => "always".to_owned(),
        RuleAst::Const(false) => "never".to_owned(),
        RuleAst::Cmp(op, a, b) => format!("{} {} {}", num(a, names), relation(*op), num(b, names)),
        RuleAst::And(a, b) => wrap(format!("{} and {}", rule(a, names, true), rule(b, names, true))),
        RuleAst::Or(a, b) => wrap(format!("{} or {}", rule(a, names, true), rule(b, names, true))),
        RuleAst::Not(a) => format!("not ({})", rule(a, names, false)),
    }
}

/// Describes what a rule checks, naming features when names are known.
pub fn describe_rule(ast: &RuleAst, feature_names: Option<&[String]>) -> String {
    rule(ast, feature_names, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rule;

    #[test]
    fn readable_text() {
        let ast = parse_rule("hop(1).freq(2) >= 0.5 AND (degree < 3 OR feat[0] > 1)").unwrap();
        assert_eq!(
            describe_rule(&ast, None),
            "the share of 1-hop neighbors predicted as class 2 is at least 0.5 and \
             (the degree is below 3 or feature 0 is above 1)"
        );
        let names = vec!["constant".to_owned()];
        assert_eq!(
            describe_rule(&parse_rule("feat[0] != 1").unwrap(), Some(&names)),
            "feature 'constant' differs from 1"
        );
        assert_eq!(describe_rule(&RuleAst::Const(true), None), "always");
    }
}
