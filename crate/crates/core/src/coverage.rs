//! Per-class exemplar selection by greedy maximization of reverse-kNN
//! coverage.
//!
//! Coverage of a set `A` within class `c` is the fraction of `c`'s population
//! (the class roster, or its sampled part for a sampled index) that lies in
//! the union of the reverse-kNN sets of `A`. The function is monotone and
//! submodular, so the greedy pick is within `1 - 1/e` of the optimum.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClassId, NodeId};
use crate::knn::RevKnnIndex;

/// Largest roster [`brute_force_select`] will enumerate.
pub const BRUTE_FORCE_MAX_ROSTER: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("class {0} has no train nodes")]
    EmptyRoster(ClassId),
    #[error("node {node} is not in the roster of class {class}")]
    NotInRoster { node: NodeId, class: ClassId },
    #[error("roster of class {class} has {size} nodes, brute force is limited to {max}")]
    RosterTooLarge {
        class: ClassId,
        size: usize,
        max: usize,
    },
    #[error("budget must be at least 1")]
    InvalidBudget,
    #[error("target coverage must lie in (0, 1], got {0}")]
    InvalidTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    TargetReached,
    ZeroGain,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub exemplar: NodeId,
    /// Marginal coverage gained by this pick.
    pub gain: f64,
    /// Coverage after this pick.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub class_id: ClassId,
    pub exemplars: Vec<NodeId>,
    pub covered: BTreeSet<NodeId>,
    pub coverage_trace: Vec<TraceStep>,
    pub budget: Option<usize>,
    pub target_coverage: f64,
    pub stop_reason: StopReason,
}

impl ExemplarSet {
    pub fn coverage(&self) -> f64 {
        self.coverage_trace.last().map_or(0.0, |s| s.coverage)
    }
}

fn check_roster(index: &RevKnnIndex, class: ClassId) -> Result<&[NodeId], CoverageError> {
    let roster = index.roster(class);
    if roster.is_empty() {
        return Err(CoverageError::EmptyRoster(class));
    }
    Ok(roster)
}

fn fraction(count: usize, population: usize) -> f64 {
    if population == 0 {
        0.0
    } else {
        count as f64 / population as f64
    }
}

/// Coverage of `members` within `class`.
pub fn set_coverage(
    index: &RevKnnIndex,
    members: &[NodeId],
    class: ClassId,
) -> Result<f64, CoverageError> {
    let roster = check_roster(index, class)?;
    let mut union = BTreeSet::new();
    for &v in members {
        if roster.binary_search(&v).is_err() {
            return Err(CoverageError::NotInRoster { node: v, class });
        }
        union.extend(index.rev_set(v).iter().copied());
    }
    Ok(fraction(union.len(), index.population(class).len()))
}

/// Greedy selection for one class. Each step adds the roster node with the
/// largest marginal gain (lowest id on ties) until the budget is spent, the
/// target coverage is met, or no node adds anything.
///
/// Uses lazy evaluation of marginal gains, which picks exactly what plain
/// greedy picks because gains only shrink as the covered set grows.
pub fn greedy_select(
    index: &RevKnnIndex,
    class: ClassId,
    budget: Option<usize>,
    target_coverage: f64,
) -> Result<ExemplarSet, CoverageError> {
    if budget == Some(0) {
        return Err(CoverageError::InvalidBudget);
    }
    if !(target_coverage > 0.0 && target_coverage <= 1.0) {
        return Err(CoverageError::InvalidTarget(target_coverage));
    }
    let roster = check_roster(index, class)?;
    let population = index.population(class).len();

    let mut heap: BinaryHeap<(usize, Reverse<NodeId>)> = roster
        .iter()
        .map(|&v| (index.rev_set(v).len(), Reverse(v)))
        .collect();
    let mut covered = BTreeSet::new();
    let mut exemplars = Vec::new();
    let mut trace = Vec::new();

    let stop_reason = loop {
        if fraction(covered.len(), population) >= target_coverage {
            break StopReason::TargetReached;
        }
        if budget.is_some_and(|b| exemplars.len() >= b) {
            break StopReason::Budget;
        }
        let pick = loop {
            let Some((_, Reverse(v))) = heap.pop() else {
                break None;
            };
            let gain = index
                .rev_set(v)
                .iter()
                .filter(|u| !covered.contains(*u))
                .count();
            let key = (gain, Reverse(v));
            if heap.peek().is_none_or(|top| key >= *top) {
                break Some(key);
            }
            heap.push(key);
        };
        match pick {
            None => break StopReason::Exhausted,
            Some((0, _)) => break StopReason::ZeroGain,
            Some((gain, Reverse(v))) => {
                covered.extend(index.rev_set(v).iter().copied());
                exemplars.push(v);
                trace.push(TraceStep {
                    exemplar: v,
                    gain: fraction(gain, population),
                    coverage: fraction(covered.len(), population),
                });
            }
        }
    };

    Ok(ExemplarSet {
        class_id: class,
        exemplars,
        covered,
        coverage_trace: trace,
        budget,
        target_coverage,
        stop_reason,
    })
}

/// Runs [`greedy_select`] for every class with a non-empty roster.
pub fn select_all(
    index: &RevKnnIndex,
    budget: Option<usize>,
    target_coverage: f64,
) -> Result<Vec<ExemplarSet>, CoverageError> {
    let classes: Vec<ClassId> = index.classes().collect();
    classes
        .par_iter()
        .map(|&c| greedy_select(index, c, budget, target_coverage))
        .collect()
}

/// Exact optimum over all roster subsets of size at most `budget`. Among
/// equally good sets the lexicographically first one (by roster position) is
/// returned.
pub fn brute_force_select(
    index: &RevKnnIndex,
    class: ClassId,
    budget: usize,
) -> Result<(Vec<NodeId>, f64), CoverageError> {
    let roster = check_roster(index, class)?;
    if roster.len() > BRUTE_FORCE_MAX_ROSTER {
        return Err(CoverageError::RosterTooLarge {
            class,
            size: roster.len(),
            max: BRUTE_FORCE_MAX_ROSTER,
        });
    }
    let population = index.population(class);
    let masks: Vec<u32> = roster
        .iter()
        .map(|&v| {
            index.rev_set(v).iter().fold(0u32, |m, u| {
                m | population.binary_search(u).map_or(0, |i| 1 << i)
            })
        })
        .collect();

    struct Search<'a> {
        masks: &'a [u32],
        budget: usize,
        chosen: Vec<usize>,
        best: (u32, Vec<usize>),
    }
    impl Search<'_> {
        fn run(&mut self, start: usize, union: u32) {
            if union.count_ones() > self.best.0 {
                self.best = (union.count_ones(), self.chosen.clone());
            }
            if self.chosen.len() == self.budget {
                return;
            }
            for i in start..self.masks.len() {
                self.chosen.push(i);
                self.run(i + 1, union | self.masks[i]);
                self.chosen.pop();
            }
        }
    }
    let mut search = Search {
        masks: &masks,
        budget,
        chosen: Vec::new(),
        best: (0, Vec::new()),
    };
    search.run(0, 0);
    let (count, picks) = search.best;
    Ok((
        picks.into_iter().map(|i| roster[i]).collect(),
        fraction(count as usize, population.len()),
    ))
}
