//! Evaluation metrics for walk explanations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::lrp::PropagationStack;
use crate::walk::ScoredWalk;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub k: usize,
    pub k_star: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision `TP/K` and recall `TP/K*`, where TP counts node sequences
/// shared by the first K approximate and the first K* reference walks.
/// Both lists must already be in rank order.
pub fn precision_recall(approx: &[ScoredWalk], reference: &[ScoredWalk], ks: &[usize], k_stars: &[usize]) -> Vec<PrPoint> {
    let mut out = Vec::with_capacity(ks.len() * k_stars.len());
    for &k_star in k_stars {
        let truth: BTreeSet<&[usize]> = reference.iter().take(k_star).map(|w| w.nodes.as_slice()).collect();
        for &k in ks {
            let found: BTreeSet<&[usize]> = approx.iter().take(k).map(|w| w.nodes.as_slice()).collect();
            let tp = found.intersection(&truth).count() as f64;
            out.push(PrPoint {
                k,
                k_star,
                precision: if k == 0 { 0.0 } else { tp / k as f64 },
                recall: if k_star == 0 { 0.0 } else { tp / k_star as f64 },
            });
        }
    }
    out
}

/// Histogram of cosine similarities between slice columns and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    /// Bin `i` covers `[-1 + i·w, -1 + (i+1)·w)`, the last bin includes 1.
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Columns that entered the histogram.
    pub columns: usize,
    pub zero_columns: usize,
    /// Slices skipped because their average column is zero.
    pub zero_mean_slices: usize,
}

impl SimilarityHistogram {
    pub fn new(bins: usize) -> Self {
        Self { counts: vec![0; bins.max(1)], mean: 0.0, columns: 0, zero_columns: 0, zero_mean_slices: 0 }
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.counts.len() as f64
    }

    fn add(&mut self, cos: f64) {
        let bins = self.counts.len();
        let idx = (((cos + 1.0) / self.bin_width()) as usize).min(bins - 1);
        self.counts[idx] += 1;
        self.mean += cos;
        self.columns += 1;
    }

    /// Merges `other` into `self`; both must use the same binning.
    pub fn merge(&mut self, other: &SimilarityHistogram) {
        let total = self.columns + other.columns;
        if total > 0 {
            self.mean = (self.mean * self.columns as f64 + other.mean * other.columns as f64) / total as f64;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.columns = total;
        self.zero_columns += other.zero_columns;
        self.zero_mean_slices += other.zero_mean_slices;
    }
}

/// Cosine similarity of every nonzero column `T^{l,m,m'}[:, n']` with the
/// slice's average column, pooled over layers and steps with nonzero flow.
pub fn column_similarity_histogram(stack: &PropagationStack, bins: usize) -> SimilarityHistogram {
    let mut hist = SimilarityHistogram::new(bins);
    let mut sum = 0.0;
    for l in 0..stack.depth() {
        for m in 0..stack.num_nodes() {
            for &m2 in stack.successors(l, m) {
                let Some(slice) = stack.slice(l, m, m2) else { continue };
                let ncols = slice.ncols() as f64;
                let avg: Vec<f64> = slice.rows().into_iter().map(|r| r.sum() / ncols).collect();
                let avg_norm = avg.iter().map(|v| v * v).sum::<f64>().sqrt();
                if avg_norm == 0.0 {
                    hist.zero_mean_slices += 1;
                    continue;
                }
                for col in slice.columns() {
                    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        hist.zero_columns += 1;
                        continue;
                    }
                    let dot: f64 = col.iter().zip(&avg).map(|(a, b)| a * b).sum();
                    let cos = (dot / (norm * avg_norm)).clamp(-1.0, 1.0);
                    sum += cos;
                    hist.add(cos);
                }
            }
        }
    }
    hist.mean = if hist.columns == 0 { 0.0 } else { sum / hist.columns as f64 };
    hist
}

/// Chain-to-walk matches under the two conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainMatch {
    /// Chain padded with repeats of its last node equals the walk.
    pub padded: bool,
    /// Walk with consecutive repeats collapsed equals the chain.
    pub collapsed: bool,
}

pub fn match_chain(chain: &[usize], walk: &[usize]) -> ChainMatch {
    let padded = chain.len() <= walk.len()
        && walk[..chain.len()] == *chain
        && walk[chain.len()..].iter().all(|&m| Some(&m) == chain.last());
    let mut collapsed = walk.to_vec();
    collapsed.dedup();
    ChainMatch { padded, collapsed: collapsed == chain }
}

/// Fraction of targets whose chain appears among the first `k` walks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRecall {
    pub targets: usize,
    pub padded: f64,
    pub collapsed: f64,
}

/// `cases` pairs each ground-truth chain with the ranked walks explaining its target.
pub fn infection_chain_recall<'a>(cases: impl IntoIterator<Item = (&'a [usize], &'a [ScoredWalk])>, k: usize) -> ChainRecall {
    let (mut targets, mut padded, mut collapsed) = (0usize, 0usize, 0usize);
    for (chain, walks) in cases {
        targets += 1;
        let hits = walks.iter().take(k).map(|w| match_chain(chain, &w.nodes)).fold(ChainMatch::default(), |a, b| {
            ChainMatch { padded: a.padded || b.padded, collapsed: a.collapsed || b.collapsed }
        });
        padded += usize::from(hits.padded);
        collapsed += usize::from(hits.collapsed);
    }
    let frac = |n: usize| if targets == 0 { 0.0 } else { n as f64 / targets as f64 };
    ChainRecall { targets, padded: frac(padded), collapsed: frac(collapsed) }
}

/// Edge score: the largest relevance among walks stepping along the edge.
/// Self-steps are ignored; with `undirected` the pair is stored as `(min, max)`.
pub fn walks_to_edge_scores(walks: &[ScoredWalk], undirected: bool) -> BTreeMap<(usize, usize), f64> {
    let mut scores = BTreeMap::new();
    for w in walks {
        for pair in w.nodes.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                continue;
            }
            let key = if undirected { (a.min(b), a.max(b)) } else { (a, b) };
            scores.entry(key).and_modify(|s: &mut f64| *s = s.max(w.relevance)).or_insert(w.relevance);
        }
    }
    scores
}

/// Fraction of `truth` edges among the `k` highest-scored edges (ties by edge order).
pub fn edge_recall(scores: &BTreeMap<(usize, usize), f64>, truth: &[(usize, usize)], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut ranked: Vec<_> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let top: BTreeSet<_> = ranked.into_iter().take(k).map(|(e, _)| *e).collect();
    truth.iter().filter(|e| top.contains(e)).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walks(seqs: &[&[usize]]) -> Vec<ScoredWalk> {
        seqs.iter().enumerate().map(|(i, s)| ScoredWalk::node(s.to_vec(), 1.0 / (i + 1) as f64)).collect()
    }

    #[test]
    fn prefix_gives_perfect_scores() {
        let oracle = walks(&[&[0, 1], &[1, 1], &[2, 0], &[0, 0]]);
        let pts = precision_recall(&oracle, &oracle, &[3], &[3]);
        assert_eq!((pts[0].precision, pts[0].recall), (1.0, 1.0));
        let other = walks(&[&[2, 2], &[1, 2]]);
        let pts = precision_recall(&other, &oracle, &[2], &[2]);
        assert_eq!((pts[0].precision, pts[0].recall), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_intersection() {
        let oracle = walks(&[&[0, 1], &[1, 1], &[2, 0], &[0, 0]]);
        let approx = walks(&[&[1, 1], &[2, 2], &[0, 0], &[0, 1]]);
        let pts = precision_recall(&approx, &oracle, &[1, 2, 3, 4], &[2]);
        let got: Vec<_> = pts.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(got, vec![(1.0, 0.5), (0.5, 0.5), (1.0 / 3.0, 0.5), (0.5, 1.0)]);
    }

    #[test]
    fn chain_conventions() {
        assert_eq!(match_chain(&[3, 4], &[3, 4, 4, 4]), ChainMatch { padded: true, collapsed: true });
        assert_eq!(match_chain(&[3, 4], &[3, 3, 4, 4]), ChainMatch { padded: false, collapsed: true });
        assert_eq!(match_chain(&[3, 4, 5, 6], &[3, 4, 5, 6]), ChainMatch { padded: true, collapsed: true });
        assert_eq!(match_chain(&[3, 4], &[4, 3, 4, 4]), ChainMatch::default());
    }

    #[test]
    fn recall_counts_targets() {
        let a = walks(&[&[0, 1, 1], &[2, 1, 1]]);
        let b = walks(&[&[5, 5, 6]]);
        let cases: Vec<(&[usize], &[ScoredWalk])> = vec![(&[2, 1], &a), (&[4, 6], &b)];
        let r = infection_chain_recall(cases.clone(), 2);
        assert_eq!((r.targets, r.padded, r.collapsed), (2, 0.5, 0.5));
        assert_eq!(infection_chain_recall(cases, 0).padded, 0.0);
    }

    #[test]
    fn edge_scores_take_max() {
        let mut w = walks(&[&[0, 1, 1], &[1, 0, 2]]);
        w[1].relevance = 3.0;
        let s = walks_to_edge_scores(&w, true);
        assert_eq!(s[&(0, 1)], 3.0);
        assert_eq!(s[&(0, 2)], 3.0);
        assert_eq!(s.len(), 2);
        assert_eq!(edge_recall(&s, &[(0, 1)], 1), 1.0);
    }
}
