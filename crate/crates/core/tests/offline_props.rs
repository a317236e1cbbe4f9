mod common;

use proptest::prelude::*;
use xemplar_core::rules::eval_rule;
use xemplar_core::summary::NodeSummary;
use xemplar_core::synth::offline_induce;

fn balanced(rule: &xemplar_core::rules::RuleAst, pos: &[&NodeSummary], neg: &[&NodeSummary]) -> f64 {
    let tp = pos.iter().filter(|s| eval_rule(rule, s)).count() as f64 / pos.len() as f64;
    let tn = neg.iter().filter(|s| !eval_rule(rule, s)).count() as f64 / neg.len() as f64;
    (tp + tn) / 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn train_accuracy_never_drops_with_more_terms(
        pos in proptest::collection::vec(common::summary(), 1..8),
        neg in proptest::collection::vec(common::summary(), 1..8),
    ) {
        let pos: Vec<&NodeSummary> = pos.iter().collect();
        let neg: Vec<&NodeSummary> = neg.iter().collect();
        let mut prev = 0.5;
        for terms in 0..4 {
            let rule = offline_induce(&pos, &neg, terms);
            prop_assert!(rule.num_comparisons() <= terms);
            let acc = balanced(&rule, &pos, &neg);
            prop_assert!(acc >= prev - 1e-12, "{} terms: {} < {}", terms, acc, prev);
            prev = acc;
        }
    }
}
