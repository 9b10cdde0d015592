//! Exact top-K neuron-level walks by max-product message passing.
//!
//! Messages run from the output layer towards the input:
//! `μ^L = |r|`, `μ^l[m,n] = max_{m',n'} |T^(l)[m,n,m',n']| · μ^{l+1}[m',n']`,
//! and each `(l, m, n)` remembers the arg-max successor. Following those
//! pointers from the best start gives the walk of largest `|R|`; top-K
//! then comes from search-space splitting (see [`crate::search`]).

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use crate::lrp::PropagationStack;
use crate::par;
use crate::search::{collect_positive, Candidate, SearchLimits, SearchSubset, SplitSearch, SubsetSolver, TopKResult};
use crate::walk::{steps_relevance, Ranking, ScoredWalk};

/// `(node, neuron)` at one layer.
pub type NeuronState = (usize, usize);

/// Max-product messages and arg-max pointers for every layer.
#[derive(Debug, Clone)]
pub struct MessageTable {
    /// `mu[l]` is `M x N^(l)`, for `l = 0..=L`.
    pub mu: Vec<Array2<f64>>,
    /// `step[l][m * N^(l) + n]` is the best successor at layer `l+1`.
    step: Vec<Vec<NeuronState>>,
    /// Pair evaluations spent building the table.
    pub evaluations: u64,
}

impl MessageTable {
    pub fn build(stack: &PropagationStack) -> Self {
        let depth = stack.depth();
        let m_count = stack.num_nodes();
        let mut mu = vec![Array2::zeros((0, 0)); depth + 1];
        mu[depth] = stack.output_relevance().mapv(f64::abs);
        let mut step = vec![Vec::new(); depth];
        let mut evaluations = 0u64;
        for l in (0..depth).rev() {
            let (n_in, n_out) = (stack.width(l), stack.width(l + 1));
            let next = &mu[l + 1];
            let rows = par::map_range(m_count, |m| {
                let mut best = vec![0.0f64; n_in];
                let mut arg = vec![(0usize, 0usize); n_in];
                let mut evals = 0u64;
                for &m2 in stack.successors(l, m) {
                    let Some(slice) = stack.slice(l, m, m2) else { continue };
                    let target = next.row(m2);
                    for n in 0..n_in {
                        for n2 in 0..n_out {
                            let v = slice[[n, n2]].abs() * target[n2];
                            if v > best[n] {
                                best[n] = v;
                                arg[n] = (m2, n2);
                            }
                        }
                    }
                    evals += (n_in * n_out) as u64;
                }
                (best, arg, evals)
            });
            let mut table = Array2::zeros((m_count, n_in));
            let mut pointers = Vec::with_capacity(m_count * n_in);
            for (m, (best, arg, evals)) in rows.into_iter().enumerate() {
                table.row_mut(m).assign(&ndarray::ArrayView1::from(&best));
                pointers.extend(arg);
                evaluations += evals;
            }
            mu[l] = table;
            step[l] = pointers;
        }
        Self { mu, step, evaluations }
    }

    pub fn depth(&self) -> usize {
        self.step.len()
    }

    /// Arg-max successor of `(m, n)` at layer `l`; `(0, 0)` when every
    /// continuation is zero.
    pub fn next(&self, layer: usize, state: NeuronState) -> NeuronState {
        let n_in = self.mu[layer].ncols();
        self.step[layer][state.0 * n_in + state.1]
    }

    /// Follows the pointers from `start` at `layer` to the output.
    fn continue_from(&self, layer: usize, start: NeuronState, out: &mut Vec<NeuronState>) {
        let mut cur = start;
        out.push(cur);
        for l in layer..self.depth() {
            cur = self.next(l, cur);
            out.push(cur);
        }
    }
}

/// EMP-neu as a [`SubsetSolver`] over neuron-level walks.
pub struct EmpNeu<'a> {
    stack: &'a PropagationStack,
    table: MessageTable,
    evaluations: AtomicU64,
}

impl<'a> EmpNeu<'a> {
    pub fn new(stack: &'a PropagationStack) -> Self {
        let table = MessageTable::build(stack);
        let evaluations = AtomicU64::new(table.evaluations);
        Self { stack, table, evaluations }
    }

    pub fn table(&self) -> &MessageTable {
        &self.table
    }

    fn first_allowed(&self, layer: usize, subset: &SearchSubset<NeuronState>) -> Option<NeuronState> {
        let width = self.stack.width(layer);
        (0..self.stack.num_nodes())
            .flat_map(|m| (0..width).map(move |n| (m, n)))
            .find(|s| !subset.is_excluded(s))
    }

    /// Lexicographically smallest walk of a subset whose walks are all zero.
    fn zero_walk(&self, subset: &SearchSubset<NeuronState>) -> Option<Vec<NeuronState>> {
        let i = subset.layer();
        let first = self.first_allowed(i, subset)?;
        let mut states = subset.prefix.clone();
        states.push(first);
        states.resize(self.stack.depth() + 1, (0, 0));
        Some(states)
    }

    fn best_states(&self, subset: &SearchSubset<NeuronState>) -> Option<Vec<NeuronState>> {
        let stack = self.stack;
        let i = subset.layer();
        let mut best = 0.0f64;
        let mut arg = None;
        let mut evals = 0u64;
        if i == 0 {
            let mu = &self.table.mu[0];
            for ((m, n), &v) in mu.indexed_iter() {
                evals += 1;
                if v > best && !subset.is_excluded(&(m, n)) {
                    best = v;
                    arg = Some((m, n));
                }
            }
        } else {
            let l = i - 1;
            let prefix_nonzero = subset
                .prefix
                .windows(2)
                .enumerate()
                .all(|(k, w)| stack.entry(k, w[0].0, w[0].1, w[1].0, w[1].1) != 0.0);
            if prefix_nonzero {
                let (m, n) = subset.prefix[l];
                let mu = &self.table.mu[i];
                for &m2 in stack.successors(l, m) {
                    let Some(slice) = stack.slice(l, m, m2) else { continue };
                    for n2 in 0..stack.width(i) {
                        evals += 1;
                        let v = slice[[n, n2]].abs() * mu[[m2, n2]];
                        if v > best && !subset.is_excluded(&(m2, n2)) {
                            best = v;
                            arg = Some((m2, n2));
                        }
                    }
                }
            }
        }
        self.evaluations.fetch_add(evals, Ordering::Relaxed);
        match arg {
            Some(start) => {
                let mut tail = Vec::with_capacity(stack.depth() + 1 - i);
                self.table.continue_from(i, start, &mut tail);
                let mut out = subset.prefix.clone();
                out.extend(tail);
                Some(out)
            }
            None => self.zero_walk(subset),
        }
    }
}

impl SubsetSolver for EmpNeu<'_> {
    type State = NeuronState;

    fn best_in(&self, subset: &SearchSubset<NeuronState>) -> Option<Candidate<NeuronState>> {
        let states = self.best_states(subset)?;
        let relevance = steps_relevance(self.stack, &states);
        Some(Candidate { states, relevance })
    }

    fn to_walk(&self, states: &[NeuronState], relevance: f64) -> ScoredWalk {
        ScoredWalk::neuron(states, relevance)
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// Anytime enumeration of neuron-level walks by decreasing `|R|`.
pub fn emp_neu_search(stack: &PropagationStack) -> SplitSearch<EmpNeu<'_>> {
    SplitSearch::new(EmpNeu::new(stack), Ranking::Absolute)
}

/// The single walk of largest `|R|`, or `None` if every walk is zero.
pub fn emp_neu_basic(stack: &PropagationStack) -> Option<ScoredWalk> {
    let solver = EmpNeu::new(stack);
    if solver.table.mu[0].iter().all(|&v| v == 0.0) {
        return None;
    }
    let best = solver.best_in(&SearchSubset::full())?;
    Some(solver.to_walk(&best.states, best.relevance))
}

/// Extracts walks by decreasing `|R|` until `k` positive walks are found.
/// Stops early once only zero walks remain.
pub fn emp_neu_topk(stack: &PropagationStack, k: usize, limits: SearchLimits) -> TopKResult {
    collect_positive(emp_neu_search(stack), k, limits, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exhaustive_topk_neuron, DEFAULT_ENUMERATION_BUDGET};
    use crate::testutil::random_stack;
    use crate::walk::{neuron_walk_relevance, rankings_agree};

    #[test]
    fn messages_bound_every_walk() {
        let s = random_stack(2, 3, &[2, 2, 2], 0.7);
        let t = MessageTable::build(&s);
        let all = exhaustive_topk_neuron(&s, 216, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let top = all[0].abs_relevance();
        let mu_max = t.mu[0].iter().cloned().fold(0.0, f64::max);
        assert_eq!(top, mu_max);
    }

    #[test]
    fn basic_matches_oracle_top1() {
        for seed in 0..10 {
            let s = random_stack(seed, 4, &[2, 3, 2], 0.5);
            let oracle = exhaustive_topk_neuron(&s, 1, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
            match emp_neu_basic(&s) {
                Some(w) => rankings_agree(&[w], &oracle, Ranking::Absolute, 1e-10).unwrap(),
                None => assert_eq!(oracle[0].relevance, 0.0, "seed {seed}"),
            }
        }
    }

    #[test]
    fn search_matches_oracle_prefix() {
        for seed in 0..6 {
            let s = random_stack(seed + 20, 4, &[2, 2, 2], 0.4);
            let oracle = exhaustive_topk_neuron(&s, 60, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
            let got: Vec<_> = emp_neu_search(&s).take(60).collect();
            rankings_agree(&got, &oracle, Ranking::Absolute, 1e-10).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn enumerates_whole_space_exactly_once() {
        let s = random_stack(5, 3, &[2, 1, 2], 0.5);
        let total = 6 * 3 * 6;
        let got: Vec<_> = emp_neu_search(&s).collect();
        assert_eq!(got.len(), total);
        let oracle = exhaustive_topk_neuron(&s, total, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
        rankings_agree(&got, &oracle, Ranking::Absolute, 1e-10).unwrap();
    }

    #[test]
    fn reported_relevance_is_exact() {
        let s = random_stack(9, 5, &[3, 2, 2], 0.5);
        for w in emp_neu_search(&s).take(30) {
            let r = neuron_walk_relevance(&s, &w.nodes, w.neurons.as_ref().unwrap()).unwrap();
            assert_eq!(r, w.relevance);
        }
    }

    #[test]
    fn topk_collects_positives() {
        let s = random_stack(4, 4, &[2, 2, 2], 0.6);
        let res = emp_neu_topk(&s, 5, SearchLimits::default());
        assert!(res.walks.iter().all(|w| w.relevance > 0.0));
        assert!(res.k_tilde() >= res.k());
        assert!(res.max_active_subsets <= res.k_tilde() * s.depth() + 1);
    }
}
