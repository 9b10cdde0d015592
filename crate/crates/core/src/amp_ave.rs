//! Approximate top-K node-level walks.
//!
//! Node-level relevance is a chain of matrix-vector products, which has no
//! exact max-product decomposition. Each step is instead scored by the
//! column sum `Σ_{n,n'} T^{l,m,m'}[n,n'] · μ^{l+1,m'}[n']`, i.e. as if all
//! columns of the slice were equal to their average. Messages are vectors:
//! `μ^L = |r|`, and `μ^{l,m} = T^{l,m,m̂} μ^{l+1,m̂}` for the best successor
//! `m̂`. No absolute values are taken on `T`. Candidate walks are always
//! scored with their exact relevance.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use crate::lrp::{Prepared, PropagationStack};
use crate::par;
use crate::search::{collect_positive, Candidate, SearchLimits, SearchSubset, SplitSearch, SubsetSolver, TopKResult};
use crate::walk::{node_relevance_unchecked, Ranking, ScoredWalk};

/// Vector messages, arg-max pointers and prepared products for every layer.
#[derive(Debug, Clone)]
pub struct NodeMessageTable {
    /// `mu[l]` is `M x N^(l)`, for `l = 0..=L`.
    pub mu: Vec<Array2<f64>>,
    /// `step[l][m]` is the chosen successor of `m` at layer `l+1`.
    pub step: Vec<Vec<usize>>,
    /// `prepared[l][m']` holds `μ^{l+1,m'}` ready for products with `T^{l,·,m'}`.
    prepared: Vec<Vec<Prepared>>,
    /// Start scores `Σ_n μ^{0,m}[n]`.
    start: Vec<f64>,
    pub evaluations: u64,
}

impl NodeMessageTable {
    pub fn build(stack: &PropagationStack) -> Self {
        let depth = stack.depth();
        let m_count = stack.num_nodes();
        let mut mu = vec![Array2::zeros((0, 0)); depth + 1];
        mu[depth] = stack.output_relevance().mapv(f64::abs);
        let mut step = vec![Vec::new(); depth];
        let mut prepared = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            let next = &mu[l + 1];
            let prep = par::map_range(m_count, |m2| stack.prepare(l, m2, next.row(m2).as_slice().expect("row-major")));
            let width = stack.width(l);
            let rows = par::map_range(m_count, |m| {
                let succ = stack.successors(l, m);
                let mut values: Vec<(usize, f64)> = succ.iter().map(|&m2| (m2, stack.objective_prepared(l, m, &prep[m2]))).collect();
                // Zero-flow steps all score 0; the smallest one stands in for the rest.
                if let Some(gap) = (0..m_count).find(|m2| succ.binary_search(m2).is_err()) {
                    let at = values.partition_point(|v| v.0 < gap);
                    values.insert(at, (gap, 0.0));
                }
                let arg = first_near_max(&values).unwrap_or(0);
                let mut out = vec![0.0; width];
                stack.apply_prepared(l, m, &prep[arg], &mut out);
                (arg, out)
            });
            let mut table = Array2::zeros((m_count, width));
            let mut pointers = Vec::with_capacity(m_count);
            for (m, (arg, out)) in rows.into_iter().enumerate() {
                table.row_mut(m).assign(&ndarray::ArrayView1::from(&out));
                pointers.push(arg);
            }
            mu[l] = table;
            step[l] = pointers;
            prepared[l] = prep;
        }
        let start = mu[0].rows().into_iter().map(|r| r.sum()).collect();
        let evaluations = (depth * m_count * m_count) as u64;
        Self { mu, step, prepared, start, evaluations }
    }

    pub fn depth(&self) -> usize {
        self.step.len()
    }

    /// `Σ_n μ^{0,m}[n]` for each start node.
    pub fn start_scores(&self) -> &[f64] {
        &self.start
    }
}

/// AMP-ave as a [`SubsetSolver`] over node walks.
pub struct AmpAve<'a> {
    stack: &'a PropagationStack,
    table: NodeMessageTable,
    evaluations: AtomicU64,
}

impl<'a> AmpAve<'a> {
    pub fn new(stack: &'a PropagationStack) -> Self {
        let table = NodeMessageTable::build(stack);
        let evaluations = AtomicU64::new(table.evaluations);
        Self { stack, table, evaluations }
    }

    pub fn table(&self) -> &NodeMessageTable {
        &self.table
    }

    fn best_states(&self, subset: &SearchSubset<usize>) -> Option<Vec<usize>> {
        let m_count = self.stack.num_nodes();
        let i = subset.layer();
        let score = |m: usize| -> f64 {
            if i == 0 {
                self.table.start[m]
            } else {
                self.stack.objective_prepared(i - 1, subset.prefix[i - 1], &self.table.prepared[i - 1][m])
            }
        };
        let values: Vec<(usize, f64)> = (0..m_count).filter(|m| !subset.is_excluded(m)).map(|m| (m, score(m))).collect();
        let arg = first_near_max(&values);
        self.evaluations.fetch_add(m_count as u64, Ordering::Relaxed);
        let mut cur = arg?;
        let mut out = subset.prefix.clone();
        out.push(cur);
        for l in i..self.table.depth() {
            cur = self.table.step[l][cur];
            out.push(cur);
        }
        Some(out)
    }
}

/// Relative tolerance under which two step scores count as tied.
const TIE_TOL: f64 = 1e-12;

/// First index whose value is within [`TIE_TOL`] of the maximum, so that
/// mathematically tied scores resolve to the smallest node regardless of
/// rounding in how the tensors are stored.
fn first_near_max(values: &[(usize, f64)]) -> Option<usize> {
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().map(|v| v.1.abs()).fold(0.0, f64::max);
    values.iter().find(|v| v.1 >= max - TIE_TOL * scale).map(|v| v.0)
}

impl SubsetSolver for AmpAve<'_> {
    type State = usize;

    fn best_in(&self, subset: &SearchSubset<usize>) -> Option<Candidate<usize>> {
        let states = self.best_states(subset)?;
        let relevance = node_relevance_unchecked(self.stack, &states);
        Some(Candidate { states, relevance })
    }

    fn to_walk(&self, states: &[usize], relevance: f64) -> ScoredWalk {
        ScoredWalk::node(states.to_vec(), relevance)
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// Anytime enumeration of node walks; each subset contributes its
/// approximately best walk, ranked by exact signed relevance.
pub fn amp_ave_search(stack: &PropagationStack) -> SplitSearch<AmpAve<'_>> {
    SplitSearch::new(AmpAve::new(stack), Ranking::Signed)
}

/// The approximately most relevant node walk, or `None` if all messages vanish.
pub fn amp_ave_basic(stack: &PropagationStack) -> Option<ScoredWalk> {
    let solver = AmpAve::new(stack);
    if solver.table.mu[0].iter().all(|&v| v == 0.0) {
        return None;
    }
    let best = solver.best_in(&SearchSubset::full())?;
    Some(solver.to_walk(&best.states, best.relevance))
}

/// Extracts walks until `k` have positive relevance; non-positive ones are
/// counted in [`TopKResult::negatives_skipped`].
pub fn amp_ave_topk(stack: &PropagationStack, k: usize, limits: SearchLimits) -> TopKResult {
    collect_positive(amp_ave_search(stack), k, limits, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrp::MemoryMode;
    use crate::oracle::{exhaustive_topk_node, DEFAULT_ENUMERATION_BUDGET};
    use crate::synth::InstanceSpec;
    use crate::walk::{node_walk_relevance, rankings_agree};

    #[test]
    fn single_neuron_networks_are_exact() {
        for seed in 0..20 {
            let inst = InstanceSpec::gcn(5, &[1, 1, 1, 1]).nonnegative().edge_prob(0.5).build(seed);
            let s = inst.stack();
            let oracle = exhaustive_topk_node(&s, 1, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap();
            match amp_ave_basic(&s) {
                Some(w) => rankings_agree(&[w], &oracle, Ranking::Signed, 1e-10).unwrap_or_else(|e| panic!("seed {seed}: {e}")),
                None => assert_eq!(oracle[0].relevance, 0.0),
            }
        }
    }

    #[test]
    fn reported_relevance_is_exact() {
        let inst = InstanceSpec::gcn(6, &[3, 4, 2]).build(11);
        let s = inst.stack();
        for w in amp_ave_search(&s).take(40) {
            assert_eq!(node_walk_relevance(&s, &w.nodes).unwrap(), w.relevance);
        }
    }

    #[test]
    fn enumerates_whole_space_once() {
        let inst = InstanceSpec::gcn(4, &[2, 2, 2]).build(3);
        let s = inst.stack();
        let mut nodes: Vec<_> = amp_ave_search(&s).map(|w| w.nodes).collect();
        assert_eq!(nodes.len(), 64);
        nodes.sort();
        nodes.dedup();
        assert_eq!(nodes.len(), 64);
    }

    #[test]
    fn memory_modes_agree() {
        for seed in 0..10 {
            let spec = InstanceSpec::gcn(6, &[3, 4, 4, 2]);
            let a = spec.clone().memory(MemoryMode::Materialized).build(seed);
            let b = spec.memory(MemoryMode::Factorized).build(seed);
            let (sa, sb) = (a.stack(), b.stack());
            assert!(sa.is_materialized() && !sb.is_materialized());
            let ra = amp_ave_topk(&sa, 10, SearchLimits { max_extractions: Some(200) });
            let rb = amp_ave_topk(&sb, 10, SearchLimits { max_extractions: Some(200) });
            assert_eq!(ra.k_tilde(), rb.k_tilde());
            rankings_agree(&ra.walks, &rb.walks, Ranking::Signed, 1e-9).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn positives_only_and_negatives_counted() {
        let inst = InstanceSpec::gcn(5, &[2, 3, 2]).build(8);
        let s = inst.stack();
        let res = amp_ave_topk(&s, 5, SearchLimits::default());
        assert!(res.walks.iter().all(|w| w.relevance > 0.0));
        assert_eq!(res.negatives_skipped() + res.k(), res.k_tilde());
    }
}
