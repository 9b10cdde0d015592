//! Walks, their relevance, and the ordering shared by every search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrp::PropagationStack;

/// A walk (node sequence of length `L+1`), optionally refined with one
/// neuron per layer, together with its signed relevance.
///
/// Serialized as one JSON object per line: `{nodes, neurons, relevance}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWalk {
    pub nodes: Vec<usize>,
    pub neurons: Option<Vec<usize>>,
    pub relevance: f64,
}

impl ScoredWalk {
    pub fn node(nodes: Vec<usize>, relevance: f64) -> Self {
        Self { nodes, neurons: None, relevance }
    }

    pub fn neuron(steps: &[(usize, usize)], relevance: f64) -> Self {
        Self {
            nodes: steps.iter().map(|s| s.0).collect(),
            neurons: Some(steps.iter().map(|s| s.1).collect()),
            relevance,
        }
    }

    pub fn abs_relevance(&self) -> f64 {
        self.relevance.abs()
    }

    /// `(m_l, n_l)` pairs; node walks report neuron 0 everywhere.
    pub fn steps(&self) -> Vec<(usize, usize)> {
        match &self.neurons {
            Some(n) => self.nodes.iter().copied().zip(n.iter().copied()).collect(),
            None => self.nodes.iter().map(|&m| (m, 0)).collect(),
        }
    }

    fn key(&self) -> Vec<usize> {
        match &self.neurons {
            Some(n) => self.nodes.iter().zip(n).flat_map(|(a, b)| [*a, *b]).collect(),
            None => self.nodes.clone(),
        }
    }
}

/// What a top-K search ranks by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ranking {
    Signed,
    Absolute,
}

impl Ranking {
    #[inline]
    pub fn score(self, relevance: f64) -> f64 {
        // `+ 0.0` folds -0.0 into +0.0 so zero walks tie.
        match self {
            Ranking::Signed => relevance + 0.0,
            Ranking::Absolute => relevance.abs(),
        }
    }
}

/// `score` rounded to 36 mantissa bits (relative spacing about 1.5e-11).
/// Scores that differ only by evaluation-order rounding compare equal, so
/// every ranking breaks such ties by walk index rather than by noise.
pub fn tie_key(score: f64) -> f64 {
    const LOW: u64 = 16;
    let rounded = f64::from_bits((score.to_bits() + (1 << (LOW - 1))) & !((1 << LOW) - 1));
    if rounded.is_finite() {
        rounded
    } else {
        score
    }
}

/// Best-first order: higher score first (compared by [`tie_key`]), then lexicographically smaller
/// index sequence (`m_0, n_0, m_1, n_1, ...` for neuron walks).
pub fn rank_order(ranking: Ranking, a: &ScoredWalk, b: &ScoredWalk) -> Ordering {
    tie_key(ranking.score(b.relevance))
        .total_cmp(&tie_key(ranking.score(a.relevance)))
        .then_with(|| a.key().cmp(&b.key()))
}

pub fn sort_walks(walks: &mut [ScoredWalk], ranking: Ranking) {
    walks.sort_by(|a, b| rank_order(ranking, a, b));
}

/// Checks that two ranked lists agree: same length, scores equal within
/// `tol` (relative to the top score), and the same walks within every run
/// of tied scores. Walks whose true relevances coincide can differ in the
/// last bits depending on evaluation order, so their relative order is not
/// compared. A tie run cut off by the list end only needs matching scores.
pub fn rankings_agree(a: &[ScoredWalk], b: &[ScoredWalk], ranking: Ranking, tol: f64) -> std::result::Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("lengths differ: {} vs {}", a.len(), b.len()));
    }
    let Some(first) = a.first() else { return Ok(()) };
    let eps = tol * ranking.score(first.relevance).abs().max(1.0);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if (x.relevance - y.relevance).abs() > eps {
            return Err(format!("position {i}: relevance {} vs {}", x.relevance, y.relevance));
        }
    }
    let mut start = 0;
    while start < a.len() {
        let mut end = start + 1;
        while end < a.len() && (ranking.score(a[end - 1].relevance) - ranking.score(a[end].relevance)).abs() <= eps {
            end += 1;
        }
        if end < a.len() {
            let mut ka: Vec<_> = a[start..end].iter().map(ScoredWalk::key).collect();
            let mut kb: Vec<_> = b[start..end].iter().map(ScoredWalk::key).collect();
            ka.sort();
            kb.sort();
            if ka != kb {
                return Err(format!("positions {start}..{end}: different walks {:?} vs {:?}", ka, kb));
            }
        }
        start = end;
    }
    Ok(())
}

fn check_nodes(stack: &PropagationStack, nodes: &[usize]) -> Result<()> {
    if nodes.len() != stack.depth() + 1 {
        return Err(Error::param("walk", format!("length {} for depth {}", nodes.len(), stack.depth())));
    }
    if let Some(m) = nodes.iter().find(|&&m| m >= stack.num_nodes()) {
        return Err(Error::param("walk", format!("node {m} out of range")));
    }
    Ok(())
}

/// Neuron-level relevance `(Π_l T^(l)[m_l, n_l, m_{l+1}, n_{l+1}]) · r^{L,m_L}_{n_L}`,
/// accumulated from the output side.
pub fn neuron_walk_relevance(stack: &PropagationStack, nodes: &[usize], neurons: &[usize]) -> Result<f64> {
    check_nodes(stack, nodes)?;
    if neurons.len() != nodes.len() {
        return Err(Error::param("walk", "neuron and node sequences differ in length"));
    }
    for (l, &n) in neurons.iter().enumerate() {
        if n >= stack.width(l) {
            return Err(Error::param("walk", format!("neuron {n} out of range at layer {l}")));
        }
    }
    Ok(neuron_relevance_unchecked(stack, nodes, neurons))
}

pub(crate) fn neuron_relevance_unchecked(stack: &PropagationStack, nodes: &[usize], neurons: &[usize]) -> f64 {
    let depth = stack.depth();
    let mut acc = stack.output_relevance()[[nodes[depth], neurons[depth]]];
    for l in (0..depth).rev() {
        acc *= stack.entry(l, nodes[l], neurons[l], nodes[l + 1], neurons[l + 1]);
    }
    acc
}

pub(crate) fn steps_relevance(stack: &PropagationStack, steps: &[(usize, usize)]) -> f64 {
    let depth = stack.depth();
    let (mut m2, mut n2) = steps[depth];
    let mut acc = stack.output_relevance()[[m2, n2]];
    for l in (0..depth).rev() {
        let (m, n) = steps[l];
        acc *= stack.entry(l, m, n, m2, n2);
        (m2, n2) = (m, n);
    }
    acc
}

/// Node-level relevance `1ᵀ (Π_l T^{l,m_l,m_{l+1}}) r^{L,m_L}`, the sum of
/// all neuron-level relevances along the node path.
pub fn node_walk_relevance(stack: &PropagationStack, nodes: &[usize]) -> Result<f64> {
    check_nodes(stack, nodes)?;
    Ok(node_relevance_unchecked(stack, nodes))
}

pub(crate) fn node_relevance_unchecked(stack: &PropagationStack, nodes: &[usize]) -> f64 {
    let depth = stack.depth();
    let mut v = stack.output_relevance().row(nodes[depth]).to_vec();
    for l in (0..depth).rev() {
        if !stack.is_step(l, nodes[l], nodes[l + 1]) {
            return 0.0;
        }
        v = stack.apply(l, nodes[l], nodes[l + 1], &v);
    }
    v.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_breaks_ties_lexicographically() {
        let mut w = vec![
            ScoredWalk::node(vec![1, 0], 0.5),
            ScoredWalk::node(vec![0, 1], 0.5),
            ScoredWalk::node(vec![2, 2], -0.9),
            ScoredWalk::node(vec![0, 0], 0.1),
        ];
        sort_walks(&mut w, Ranking::Signed);
        let nodes: Vec<_> = w.iter().map(|s| s.nodes.clone()).collect();
        assert_eq!(nodes, vec![vec![0, 1], vec![1, 0], vec![0, 0], vec![2, 2]]);
        sort_walks(&mut w, Ranking::Absolute);
        assert_eq!(w[0].nodes, vec![2, 2]);
    }

    #[test]
    fn json_line_shape() {
        let w = ScoredWalk::node(vec![0, 1], 0.25);
        assert_eq!(serde_json::to_string(&w).unwrap(), r#"{"nodes":[0,1],"neurons":null,"relevance":0.25}"#);
        let n = ScoredWalk::neuron(&[(0, 2), (1, 0)], -1.0);
        assert_eq!(serde_json::to_string(&n).unwrap(), r#"{"nodes":[0,1],"neurons":[2,0],"relevance":-1.0}"#);
    }
}
