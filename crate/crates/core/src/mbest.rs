//! Exact M-best extraction over per-part discrete states by subspace
//! partitioning.
//!
//! Configurations are vectors of one packed state id per part. The extractor
//! maintains a priority queue of disjoint subspaces, each with its best
//! configuration; popping the queue yields the globally next-best
//! configuration, and the popped subspace is split into child subspaces that
//! exclude it. Disjointness means no duplicate configurations can appear.
//! The caller supplies the constrained maximizer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::real::Real;

/// A subspace of configurations: parts `0..prefix.len()` are clamped to the
/// given states, and part `prefix.len()` must avoid every state in `excluded`.
#[derive(Debug, Clone, Default)]
pub(crate) struct SubSpace {
    pub prefix: Vec<u64>,
    pub excluded: Vec<u64>,
}

struct Candidate<T> {
    score: T,
    config: Vec<u64>,
    space: SubSpace,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score && self.config == other.config
    }
}
impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Higher score first; ties broken toward the lexicographically
        // smaller configuration.
        match self.score.partial_cmp(&other.score).expect("finite scores") {
            Ordering::Equal => other.config.cmp(&self.config),
            ord => ord,
        }
    }
}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Extract up to `m` best configurations over `parts` parts.
///
/// `solve` returns the best configuration inside a subspace (or `None` when
/// the subspace is empty or only reaches sentinel scores). `keep` decides
/// whether a popped configuration counts toward the output (non-maximum
/// suppression hook); suppressed configurations still have their subspaces
/// expanded so later candidates are not lost.
pub(crate) fn extract_m_best<T: Real>(
    parts: usize,
    m: usize,
    mut solve: impl FnMut(&SubSpace) -> Option<(T, Vec<u64>)>,
    mut keep: impl FnMut(T, &[u64], &[(T, Vec<u64>)]) -> bool,
) -> Vec<(T, Vec<u64>)> {
    let mut heap = BinaryHeap::new();
    let root = SubSpace::default();
    if let Some((score, config)) = solve(&root) {
        heap.push(Candidate { score, config, space: root });
    }
    let mut out: Vec<(T, Vec<u64>)> = Vec::new();
    while out.len() < m {
        let Some(top) = heap.pop() else { break };
        // Split the popped subspace around its best configuration.
        let base = top.space.prefix.len();
        for j in base..parts {
            let mut excluded = if j == base { top.space.excluded.clone() } else { Vec::new() };
            excluded.push(top.config[j]);
            let child = SubSpace { prefix: top.config[..j].to_vec(), excluded };
            if let Some((score, config)) = solve(&child) {
                heap.push(Candidate { score, config, space: child });
            }
        }
        if keep(top.score, &top.config, &out) {
            out.push((top.score, top.config));
        }
    }
    out
}
