//! Best-first top-K̃ enumeration by search-space splitting.
//!
//! The walk space is kept as a set of disjoint subsets, each described by
//! a fixed prefix for layers `0..i` and a set of states forbidden at layer
//! `i`. Every subset carries its best walk. Extracting the overall best
//! walk `w` from subset `S` replaces `S` by
//!
//! * `S` with `w_i` additionally forbidden at layer `i`, and
//! * for `j = i+1 ..= L`: prefix `w_0..w_{j-1}`, `w_j` forbidden at layer `j`,
//!
//! which together cover `S \ {w}` exactly. Only the per-subset maximisation
//! is method specific; see [`SubsetSolver`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::walk::{tie_key, Ranking, ScoredWalk};

/// One cell of the partition of the unexplored walk space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSubset<S> {
    pub prefix: Vec<S>,
    /// Sorted states forbidden at layer `prefix.len()`.
    pub excluded: Vec<S>,
}

impl<S: Copy + Ord> SearchSubset<S> {
    pub fn full() -> Self {
        Self { prefix: Vec::new(), excluded: Vec::new() }
    }

    /// The first layer that is not fixed by the prefix.
    pub fn layer(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_excluded(&self, state: &S) -> bool {
        self.excluded.binary_search(state).is_ok()
    }

    pub fn contains(&self, walk: &[S]) -> bool {
        let i = self.layer();
        walk.len() > i && walk[..i] == self.prefix[..] && !self.is_excluded(&walk[i])
    }
}

/// Splits `within \ {found}` into disjoint subsets. `found` must lie in `within`.
pub fn split_subset<S: Copy + Ord>(found: &[S], within: &SearchSubset<S>) -> Vec<SearchSubset<S>> {
    debug_assert!(within.contains(found));
    let i = within.layer();
    let mut excluded = within.excluded.clone();
    let pos = excluded.binary_search(&found[i]).unwrap_err();
    excluded.insert(pos, found[i]);
    let mut out = vec![SearchSubset { prefix: within.prefix.clone(), excluded }];
    for j in i + 1..found.len() {
        out.push(SearchSubset { prefix: found[..j].to_vec(), excluded: vec![found[j]] });
    }
    out
}

/// Best walk inside a subset, as found by a method.
#[derive(Debug, Clone)]
pub struct Candidate<S> {
    pub states: Vec<S>,
    /// Exact signed relevance of `states`.
    pub relevance: f64,
}

pub trait SubsetSolver {
    type State: Copy + Ord + Send + Sync;

    /// Best walk of `subset`, or `None` if the subset is empty.
    fn best_in(&self, subset: &SearchSubset<Self::State>) -> Option<Candidate<Self::State>>;

    fn to_walk(&self, states: &[Self::State], relevance: f64) -> ScoredWalk;

    /// Number of elementary argmax evaluations performed so far.
    fn evaluations(&self) -> u64 {
        0
    }
}

struct Frontier<S> {
    score: f64,
    /// [`tie_key`] of `score`, used for ordering.
    key: f64,
    candidate: Candidate<S>,
    subset: SearchSubset<S>,
}

impl<S: Ord> PartialEq for Frontier<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Ord> Eq for Frontier<S> {}
impl<S: Ord> PartialOrd for Frontier<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Ord> Ord for Frontier<S> {
    // Max-heap: higher score wins, then the lexicographically smaller walk.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.candidate.states.cmp(&self.candidate.states))
    }
}

/// Anytime best-first enumeration; each `next()` yields the next walk.
pub struct SplitSearch<P: SubsetSolver> {
    solver: P,
    ranking: Ranking,
    frontier: BinaryHeap<Frontier<P::State>>,
    subsets_created: usize,
    extracted: usize,
}

impl<P: SubsetSolver> SplitSearch<P> {
    pub fn new(solver: P, ranking: Ranking) -> Self {
        let mut search = Self { solver, ranking, frontier: BinaryHeap::new(), subsets_created: 0, extracted: 0 };
        search.add(SearchSubset::full());
        search
    }

    fn add(&mut self, subset: SearchSubset<P::State>) {
        self.subsets_created += 1;
        if let Some(candidate) = self.solver.best_in(&subset) {
            let score = self.ranking.score(candidate.relevance);
            self.frontier.push(Frontier { score, key: tie_key(score), candidate, subset });
        }
    }

    /// Ranking score of the best remaining walk.
    pub fn peek_score(&self) -> Option<f64> {
        self.frontier.peek().map(|f| f.score)
    }

    /// Number of walks extracted so far (K̃).
    pub fn extracted(&self) -> usize {
        self.extracted
    }

    /// Total subsets created, including the initial full space.
    pub fn subsets_created(&self) -> usize {
        self.subsets_created
    }

    /// Nonempty subsets currently covering the unexplored space.
    pub fn active_subsets(&self) -> impl Iterator<Item = &SearchSubset<P::State>> {
        self.frontier.iter().map(|f| &f.subset)
    }

    pub fn active_count(&self) -> usize {
        self.frontier.len()
    }

    pub fn solver(&self) -> &P {
        &self.solver
    }
}

impl<P: SubsetSolver> Iterator for SplitSearch<P> {
    type Item = ScoredWalk;

    fn next(&mut self) -> Option<ScoredWalk> {
        let best = self.frontier.pop()?;
        self.extracted += 1;
        for part in split_subset(&best.candidate.states, &best.subset) {
            self.add(part);
        }
        Some(self.solver.to_walk(&best.candidate.states, best.candidate.relevance))
    }
}

/// Stopping limits for top-K searches.
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchLimits {
    /// Give up after this many extracted walks.
    pub max_extractions: Option<usize>,
}

/// Outcome of a top-K positive-relevance search.
#[derive(Debug, Clone)]
pub struct TopKResult {
    /// Positive walks in extraction order.
    pub walks: Vec<ScoredWalk>,
    /// Every extracted walk (the top-K̃ list).
    pub extracted: Vec<ScoredWalk>,
    pub subsets_created: usize,
    pub max_active_subsets: usize,
    pub evaluations: u64,
    /// Fewer than K positive walks were found.
    pub exhausted: bool,
}

impl TopKResult {
    pub fn k(&self) -> usize {
        self.walks.len()
    }

    pub fn k_tilde(&self) -> usize {
        self.extracted.len()
    }

    pub fn negatives_skipped(&self) -> usize {
        self.extracted.len() - self.walks.len()
    }

    /// `K / K̃`.
    pub fn positive_ratio(&self) -> f64 {
        if self.extracted.is_empty() {
            0.0
        } else {
            self.walks.len() as f64 / self.extracted.len() as f64
        }
    }
}

/// Extracts walks until `k` have positive relevance. `stop_at_zero` ends
/// the search once the best remaining score is 0 (exact for absolute
/// ranking, where nothing positive can follow).
pub(crate) fn collect_positive<P: SubsetSolver>(
    mut search: SplitSearch<P>,
    k: usize,
    limits: SearchLimits,
    stop_at_zero: bool,
) -> TopKResult {
    let mut walks = Vec::new();
    let mut extracted = Vec::new();
    let mut max_active = search.active_count();
    while walks.len() < k {
        if limits.max_extractions.is_some_and(|cap| extracted.len() >= cap) {
            break;
        }
        if stop_at_zero && search.peek_score().is_some_and(|s| s <= 0.0) {
            break;
        }
        let Some(w) = search.next() else { break };
        max_active = max_active.max(search.active_count());
        if w.relevance > 0.0 {
            walks.push(w.clone());
        }
        extracted.push(w);
    }
    TopKResult {
        exhausted: walks.len() < k,
        walks,
        extracted,
        subsets_created: search.subsets_created(),
        max_active_subsets: max_active,
        evaluations: search.solver().evaluations(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_split_gives_depth_plus_one_subsets() {
        let found = [(0, 1), (2, 0), (1, 1)];
        let parts = split_subset(&found, &SearchSubset::full());
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0], SearchSubset { prefix: vec![], excluded: vec![(0, 1)] });
        assert_eq!(parts[2], SearchSubset { prefix: vec![(0, 1), (2, 0)], excluded: vec![(1, 1)] });
    }

    #[test]
    fn split_partitions_tiny_space() {
        // All walks over states {0,1,2} with 3 layers.
        let all: Vec<Vec<u8>> =
            (0..27u8).map(|i| vec![i / 9, (i / 3) % 3, i % 3]).collect();
        let mut active = vec![SearchSubset::full()];
        let mut removed: Vec<Vec<u8>> = Vec::new();
        // Repeatedly remove the lexicographically largest member of the first subset.
        for _ in 0..20 {
            let Some(idx) = active.iter().position(|s| all.iter().any(|w| s.contains(w))) else { break };
            let s = active.remove(idx);
            let w = all.iter().rev().find(|w| s.contains(w)).unwrap().clone();
            active.extend(split_subset(&w, &s));
            removed.push(w);
            for walk in &all {
                let hits = active.iter().filter(|s| s.contains(walk)).count();
                let expected = usize::from(!removed.contains(walk));
                assert_eq!(hits, expected, "walk {walk:?}");
            }
        }
    }
}
