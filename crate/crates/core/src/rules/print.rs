use std::fmt;

use super::{Field, NumExpr, RuleAst};

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Field::Feat(i) => write!(f, "feat[{i}]"),
            Field::Freq { hop, class } => write!(f, "hop({hop}).freq({class})"),
            Field::L1 { hop, attr } => write!(f, "hop({hop}).l1({attr})"),
            Field::Degree => f.write_str("degree"),
        }
    }
}

impl fmt::Display for NumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // f64 Display is the shortest string that parses back exactly
            NumExpr::Lit(x) => write!(f, "{x}"),
            NumExpr::Field(field) => write!(f, "{field}"),
            NumExpr::Indicator(b) => write!(f, "I({b})"),
            NumExpr::Add(a, b) => write!(f, "({a} + {b})"),
            NumExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            NumExpr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleAst::Const(true) => f.write_str("TRUE"),
            RuleAst::Const(false) => f.write_str("FALSE"),
            RuleAst::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            RuleAst::And(a, b) => write!(f, "({a} AND {b})"),
            RuleAst::Or(a, b) => write!(f, "({a} OR {b})"),
            RuleAst::Not(a) => match **a {
                RuleAst::And(..) | RuleAst::Or(..) => write!(f, "NOT {a}"),
                _ => write!(f, "NOT ({a})"),
            },
        }
    }
}
