//! Brute-force top-K walk search: evaluates every walk and keeps the best
//! K under the shared ranking. Work is split over the final node `m_L`
//! and merged, which leaves the result independent of scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::lrp::PropagationStack;
use crate::par;
use crate::walk::{rank_order, sort_walks, tie_key, Ranking, ScoredWalk};

/// Default cap on the number of enumerated walks.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 100_000_000;

/// Number of node-level walks, `M^(L+1)`.
pub fn node_walk_count(stack: &PropagationStack) -> u128 {
    (stack.num_nodes() as u128).saturating_pow(stack.depth() as u32 + 1)
}

/// Number of neuron-level walks, `Π_l M·N^(l)`.
pub fn neuron_walk_count(stack: &PropagationStack) -> u128 {
    let m = stack.num_nodes() as u128;
    stack.widths().iter().fold(1u128, |acc, &n| acc.saturating_mul(m * n as u128))
}

fn check_budget(count: u128, budget: u128) -> Result<()> {
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    Ok(())
}

struct Ranked(ScoredWalk, Ranking);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // Worse walks compare greater, so the heap top is the current worst.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self.1, &self.0, &other.0)
    }
}

/// Bounded best-K collector.
pub(crate) struct TopK {
    k: usize,
    ranking: Ranking,
    heap: BinaryHeap<Ranked>,
}

impl TopK {
    pub(crate) fn new(k: usize, ranking: Ranking) -> Self {
        Self { k, ranking, heap: BinaryHeap::with_capacity(k + 1) }
    }

    /// Offers a walk built lazily, only if it could enter the top K.
    pub(crate) fn offer(&mut self, relevance: f64, build: impl FnOnce(f64) -> ScoredWalk) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() == self.k {
            let worst = tie_key(self.ranking.score(self.heap.peek().unwrap().0.relevance));
            if tie_key(self.ranking.score(relevance)) < worst {
                return;
            }
        }
        self.heap.push(Ranked(build(relevance), self.ranking));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<ScoredWalk> {
        let mut v: Vec<_> = self.heap.into_iter().map(|r| r.0).collect();
        sort_walks(&mut v, self.ranking);
        v
    }
}

fn merge(parts: Vec<Vec<ScoredWalk>>, k: usize, ranking: Ranking) -> Vec<ScoredWalk> {
    let mut all: Vec<_> = parts.into_iter().flatten().collect();
    sort_walks(&mut all, ranking);
    all.truncate(k);
    all
}

/// Exhaustive top-K node-level walks.
pub fn exhaustive_topk_node(stack: &PropagationStack, k: usize, ranking: Ranking, budget: u128) -> Result<Vec<ScoredWalk>> {
    check_budget(node_walk_count(stack), budget)?;
    let roots: Vec<usize> = (0..stack.num_nodes()).collect();
    Ok(exhaustive_node_roots(stack, k, ranking, &roots))
}

/// Exhaustive search restricted to walks ending at one of `roots`.
pub fn exhaustive_node_roots(stack: &PropagationStack, k: usize, ranking: Ranking, roots: &[usize]) -> Vec<ScoredWalk> {
    let parts = par::map(roots.to_vec(), |last| {
        let depth = stack.depth();
        let mut top = TopK::new(k, ranking);
        let mut path = vec![0; depth + 1];
        path[depth] = last;
        let v = stack.output_relevance().row(last).to_vec();
        node_descend(stack, depth, &v, false, &mut path, &mut top);
        top.into_sorted()
    });
    merge(parts, k, ranking)
}

fn node_descend(stack: &PropagationStack, layer: usize, v: &[f64], zero: bool, path: &mut [usize], top: &mut TopK) {
    if layer == 0 {
        let relevance = if zero { 0.0 } else { v.iter().sum() };
        top.offer(relevance, |r| ScoredWalk::node(path.to_vec(), r));
        return;
    }
    let l = layer - 1;
    let next = path[layer];
    let prepared = (!zero).then(|| stack.prepare(l, next, v));
    let mut out = vec![0.0; stack.width(l)];
    for m in 0..stack.num_nodes() {
        path[l] = m;
        match &prepared {
            Some(p) if stack.is_step(l, m, next) => {
                stack.apply_prepared(l, m, p, &mut out);
                node_descend(stack, l, &out, false, path, top);
            }
            _ => node_descend(stack, l, &out, true, path, top),
        }
    }
}

/// Exhaustive top-K neuron-level walks.
pub fn exhaustive_topk_neuron(stack: &PropagationStack, k: usize, ranking: Ranking, budget: u128) -> Result<Vec<ScoredWalk>> {
    check_budget(neuron_walk_count(stack), budget)?;
    let depth = stack.depth();
    let roots: Vec<(usize, usize)> =
        (0..stack.num_nodes()).flat_map(|m| (0..stack.width(depth)).map(move |n| (m, n))).collect();
    let parts = par::map(roots, |(m, n)| {
        let mut top = TopK::new(k, ranking);
        let mut path = vec![(0, 0); depth + 1];
        path[depth] = (m, n);
        let acc = stack.output_relevance()[[m, n]];
        neuron_descend(stack, depth, acc, &mut path, &mut top);
        top.into_sorted()
    });
    Ok(merge(parts, k, ranking))
}

fn neuron_descend(stack: &PropagationStack, layer: usize, acc: f64, path: &mut [(usize, usize)], top: &mut TopK) {
    if layer == 0 {
        top.offer(acc, |r| ScoredWalk::neuron(path, r));
        return;
    }
    let l = layer - 1;
    let (m2, n2) = path[layer];
    for m in 0..stack.num_nodes() {
        for n in 0..stack.width(l) {
            path[l] = (m, n);
            let a = acc * stack.entry(l, m, n, m2, n2);
            neuron_descend(stack, l, a, path, top);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_stack;
    use crate::walk::{neuron_walk_relevance, node_walk_relevance};

    /// All walks with m_0 outermost, evaluated one by one.
    fn forward_enumeration(stack: &PropagationStack) -> Vec<ScoredWalk> {
        let (m, depth) = (stack.num_nodes(), stack.depth());
        let total = m.pow(depth as u32 + 1);
        (0..total)
            .map(|mut idx| {
                let mut nodes = vec![0; depth + 1];
                for slot in nodes.iter_mut().rev() {
                    *slot = idx % m;
                    idx /= m;
                }
                let r = node_walk_relevance(stack, &nodes).unwrap();
                ScoredWalk::node(nodes, r)
            })
            .collect()
    }

    #[test]
    fn top1_matches_forward_enumeration() {
        for seed in 0..5 {
            let s = random_stack(seed, 5, &[2, 3, 2], 0.5);
            let mut all = forward_enumeration(&s);
            assert_eq!(all.len(), 125);
            sort_walks(&mut all, Ranking::Signed);
            let top = exhaustive_topk_node(&s, 10, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap();
            assert_eq!(&all[..10], &top[..]);
            let max = all.iter().map(|w| w.relevance).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(tie_key(top[0].relevance), tie_key(max));
        }
    }

    #[test]
    fn single_node_has_one_walk() {
        let s = random_stack(1, 1, &[2, 2, 2], 1.0);
        let top = exhaustive_topk_node(&s, 5, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].nodes, vec![0, 0, 0]);
    }

    #[test]
    fn zero_walks_follow_lexicographic_order() {
        // Sparse graph: most walks are zero and must come out in index order.
        let s = random_stack(3, 4, &[1, 1, 1], 0.0);
        let all = exhaustive_topk_node(&s, 64, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let zeros: Vec<_> = all.iter().filter(|w| w.relevance == 0.0).map(|w| w.nodes.clone()).collect();
        let mut sorted = zeros.clone();
        sorted.sort();
        assert_eq!(zeros, sorted);
    }

    #[test]
    fn neuron_enumeration_matches_direct_evaluation() {
        let s = random_stack(7, 3, &[2, 2, 2], 0.6);
        let top = exhaustive_topk_neuron(&s, 20, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
        for w in &top {
            let r = neuron_walk_relevance(&s, &w.nodes, w.neurons.as_ref().unwrap()).unwrap();
            assert_eq!(r, w.relevance);
        }
        for pair in top.windows(2) {
            assert!(tie_key(pair[0].abs_relevance()) >= tie_key(pair[1].abs_relevance()));
        }
    }

    #[test]
    fn budget_refusal_names_count() {
        let s = random_stack(0, 5, &[2, 3, 2], 0.5);
        match exhaustive_topk_node(&s, 1, Ranking::Signed, 100) {
            Err(Error::BudgetExceeded { count, budget }) => assert_eq!((count, budget), (125, 100)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(exhaustive_topk_neuron(&s, 1, Ranking::Signed, 1000).is_err());
    }
}
