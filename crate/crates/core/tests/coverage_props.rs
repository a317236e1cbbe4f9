use std::collections::BTreeMap;

use proptest::prelude::*;
use xemplar_core::coverage::{brute_force_select, greedy_select, set_coverage, StopReason};
use xemplar_core::knn::{IndexMode, RevKnnIndex};

/// Single-class index over roster `0..n` with arbitrary reverse sets.
fn index_strategy(max_n: usize) -> impl Strategy<Value = RevKnnIndex> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), n).prop_map(move |bits| {
            let rev: BTreeMap<usize, Vec<usize>> = bits
                .iter()
                .enumerate()
                .map(|(v, row)| (v, (0..n).filter(|&u| u != v && row[u]).collect()))
                .collect();
            RevKnnIndex::assemble(3, IndexMode::Exact, None, rev, BTreeMap::from([(0, (0..n).collect())])).unwrap()
        })
    })
}

fn subsets(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
    (proptest::collection::vec(0..3u8, n), 0..n).prop_map(move |(tags, v)| {
        // tag 0: outside A', 1: in A' only, 2: in A and A'
        let a: Vec<usize> = (0..n).filter(|&i| tags[i] == 2 && i != v).collect();
        let a2: Vec<usize> = (0..n).filter(|&i| tags[i] >= 1 && i != v).collect();
        (a, a2, v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn coverage_is_monotone_and_submodular(
        (index, (a, a2, v)) in index_strategy(14).prop_flat_map(|ix| {
            let n = ix.roster(0).len();
            (Just(ix), subsets(n))
        })
    ) {
        let f = |s: &[usize]| set_coverage(&index, s, 0).unwrap();
        let with = |s: &[usize]| { let mut t = s.to_vec(); t.push(v); t };
        prop_assert!(f(&a) <= f(&a2));
        let gain_small = f(&with(&a)) - f(&a);
        let gain_large = f(&with(&a2)) - f(&a2);
        prop_assert!(gain_small >= gain_large - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn greedy_is_within_the_approximation_bound(index in index_strategy(12), budget in 1..5usize) {
        let greedy = greedy_select(&index, 0, Some(budget), 1.0).unwrap();
        let (_, best) = brute_force_select(&index, 0, budget).unwrap();
        prop_assert!(greedy.coverage() >= (1.0 - (-1.0f64).exp()) * best - 1e-12);
        prop_assert!(greedy.coverage() <= best + 1e-12);
    }

    #[test]
    fn greedy_trace_is_consistent(index in index_strategy(12), budget in proptest::option::of(1..6usize), target in 0.05..1.0f64) {
        let set = greedy_select(&index, 0, budget, target).unwrap();
        let mut prev = 0.0;
        for step in &set.coverage_trace {
            prop_assert!(step.gain > 0.0);
            prop_assert!(step.coverage >= prev);
            prev = step.coverage;
        }
        prop_assert!((set.coverage() - set_coverage(&index, &set.exemplars, 0).unwrap()).abs() < 1e-12);
        if let Some(b) = budget {
            prop_assert!(set.exemplars.len() <= b);
        }
        match set.stop_reason {
            StopReason::TargetReached => prop_assert!(set.coverage() >= target),
            StopReason::Budget => prop_assert_eq!(Some(set.exemplars.len()), budget),
            StopReason::ZeroGain | StopReason::Exhausted => prop_assert!(set.coverage() < target),
        }
    }
}
