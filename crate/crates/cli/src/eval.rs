//! Plot-ready CSV on stdout, one summary line on stderr.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;

use relwalk::amp_ave::amp_ave_topk;
use relwalk::emp_neu::emp_neu_topk;
use relwalk::lrp::{GammaSpec, PropagationStack};
use relwalk::metrics::{column_similarity_histogram, edge_recall, match_chain, precision_recall, walks_to_edge_scores, SimilarityHistogram};
use relwalk::model::GnnModel;
use relwalk::oracle::exhaustive_topk_node;
use relwalk::search::SearchLimits;
use relwalk::walk::Ranking;

use crate::data::{Case, Dataset};
use crate::{invalid, sorted, Globals};

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Held-out samples at the end of the dataset (as used in training).
    #[arg(long)]
    n_test: Option<usize>,
    /// Evaluate at most this many predictions.
    #[arg(long)]
    limit: Option<usize>,
    /// Extraction cap for each search.
    #[arg(long, default_value_t = 100_000)]
    max_extractions: usize,
}

#[derive(Debug, Subcommand)]
pub enum Metric {
    /// Precision/recall of AMP-ave against the exhaustive node-level top-K*.
    Pr {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        kstars: Vec<usize>,
    },
    /// Histogram of column cosine similarities of the relevance tensors.
    Colsim {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Rank at which each recorded infection chain is found by AMP-ave.
    InfectionRecall {
        #[command(flatten)]
        common: Common,
        /// Walks searched per target; recall is summarised at this K.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Recall of motif edges among the top-scored edges (BA-2motif).
    EdgeRecall {
        #[command(flatten)]
        common: Common,
        /// Walks used to score edges.
        #[arg(long, default_value_t = 50)]
        walks: usize,
        /// Largest edge cutoff reported.
        #[arg(long, default_value_t = 10)]
        max_cutoff: usize,
    },
    /// K/K̃ of EMP-neu: share of positive walks among the extracted ones.
    PositiveRatio {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Schedules to compare; defaults to the global --gamma.
        #[arg(long, value_delimiter = ',', value_parser = crate::parse_gamma)]
        gammas: Vec<GammaSpec>,
    },
}

struct Loaded {
    model: GnnModel,
    data: Dataset,
    cases: Vec<Case>,
}

fn load(c: &Common) -> anyhow::Result<Loaded> {
    let model = GnnModel::load(&c.model)?;
    let data = Dataset::load(&c.data)?;
    let cases = data.cases(&model, c.n_test, c.limit)?;
    if cases.is_empty() {
        return Err(invalid("no test predictions to explain"));
    }
    Ok(Loaded { model, data, cases })
}

impl Loaded {
    fn stack(&self, g: &Globals, case: &Case, gamma: GammaSpec) -> anyhow::Result<PropagationStack> {
        let graph = &self.data.graphs()[case.sample];
        let pass = self.model.forward(graph)?;
        let globals = Globals { gamma, ..g.clone() };
        Ok(PropagationStack::build(&self.model, graph, &pass, case.target, &globals.propagation(self.model.depth())?)?)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn run(g: &Globals, metric: Metric) -> anyhow::Result<()> {
    match metric {
        Metric::Pr { common, ks, kstars } => {
            let (ks, kstars) = (sorted(ks), sorted(kstars));
            let l = load(&common)?;
            let limits = SearchLimits { max_extractions: Some(common.max_extractions) };
            let kmax = *ks.iter().max().unwrap_or(&1);
            let kstar_max = *kstars.iter().max().unwrap_or(&1);
            println!("sample,target,K,Kstar,precision,recall");
            let mut at = vec![Vec::new(); ks.len() * kstars.len()];
            for case in &l.cases {
                let s = l.stack(g, case, g.gamma)?;
                let approx = amp_ave_topk(&s, kmax, limits);
                let exact = exhaustive_topk_node(&s, kstar_max, Ranking::Signed, g.budget)?;
                for (i, p) in precision_recall(&approx.walks, &exact, &ks, &kstars).into_iter().enumerate() {
                    println!("{},{},{},{},{},{}", case.sample, case.target_label(), p.k, p.k_star, p.precision, p.recall);
                    at[i].push(p.precision);
                }
            }
            let means: Vec<_> = kstars
                .iter()
                .flat_map(|ks_| ks.iter().map(move |k| (*k, *ks_)))
                .zip(&at)
                .map(|((k, kstar), v)| json!({ "K": k, "Kstar": kstar, "mean_precision": mean(v) }))
                .collect();
            eprintln!("{}", json!({ "cases": l.cases.len(), "points": means }));
        }
        Metric::Colsim { common, bins } => {
            let l = load(&common)?;
            let mut pooled = SimilarityHistogram::new(bins);
            for case in &l.cases {
                pooled.merge(&column_similarity_histogram(&l.stack(g, case, g.gamma)?, bins));
            }
            println!("bin_lo,bin_hi,count");
            let w = pooled.bin_width();
            for (i, c) in pooled.counts.iter().enumerate() {
                println!("{},{},{}", -1.0 + i as f64 * w, -1.0 + (i + 1) as f64 * w, c);
            }
            eprintln!(
                "{}",
                json!({
                    "cases": l.cases.len(),
                    "mean": pooled.mean,
                    "columns": pooled.columns,
                    "zero_columns": pooled.zero_columns,
                    "zero_mean_slices": pooled.zero_mean_slices,
                })
            );
        }
        Metric::InfectionRecall { common, k } => {
            let l = load(&common)?;
            if !matches!(l.data, Dataset::Infection { .. }) {
                return Err(invalid("infection-recall needs an infection dataset"));
            }
            let limits = SearchLimits { max_extractions: Some(common.max_extractions) };
            println!("sample,target,chain_len,padded_rank,collapsed_rank");
            let (mut padded, mut collapsed) = (0usize, 0usize);
            for case in &l.cases {
                let chain = case.chain.as_deref().expect("infection cases carry chains");
                let res = amp_ave_topk(&l.stack(g, case, g.gamma)?, k, limits);
                let rank = |f: fn(&relwalk::metrics::ChainMatch) -> bool| {
                    res.walks.iter().position(|w| f(&match_chain(chain, &w.nodes))).map(|r| r + 1)
                };
                let (p, c) = (rank(|m| m.padded), rank(|m| m.collapsed));
                padded += usize::from(p.is_some_and(|r| r <= k));
                collapsed += usize::from(c.is_some_and(|r| r <= k));
                let show = |r: Option<usize>| r.map(|r| r.to_string()).unwrap_or_default();
                println!("{},{},{},{},{}", case.sample, case.target_label(), chain.len(), show(p), show(c));
            }
            let n = l.cases.len() as f64;
            eprintln!("{}", json!({ "targets": l.cases.len(), "k": k, "recall_padded": padded as f64 / n, "recall_collapsed": collapsed as f64 / n }));
        }
        Metric::EdgeRecall { common, walks, max_cutoff } => {
            let l = load(&common)?;
            let Dataset::Motif { base_size, .. } = l.data else {
                return Err(invalid("edge-recall needs a BA-2motif dataset"));
            };
            let limits = SearchLimits { max_extractions: Some(common.max_extractions) };
            println!("sample,cutoff,recall");
            let mut at = vec![Vec::new(); max_cutoff];
            for case in &l.cases {
                let truth: Vec<_> =
                    l.data.graphs()[case.sample].edges().into_iter().filter(|&(a, b)| a >= base_size && b >= base_size).collect();
                let res = amp_ave_topk(&l.stack(g, case, g.gamma)?, walks, limits);
                let scores = walks_to_edge_scores(&res.walks, true);
                for cutoff in 1..=max_cutoff {
                    let r = edge_recall(&scores, &truth, cutoff);
                    at[cutoff - 1].push(r);
                    println!("{},{},{}", case.sample, cutoff, r);
                }
            }
            let curve: Vec<f64> = at.iter().map(|v| mean(v)).collect();
            eprintln!("{}", json!({ "cases": l.cases.len(), "mean_recall": curve }));
        }
        Metric::PositiveRatio { common, k, gammas } => {
            let l = load(&common)?;
            let gammas = if gammas.is_empty() { vec![g.gamma] } else { gammas };
            let limits = SearchLimits { max_extractions: Some(common.max_extractions) };
            println!("sample,target,gamma,k,k_tilde,ratio");
            let mut summary = Vec::new();
            for gamma in gammas {
                let label = match gamma {
                    GammaSpec::Constant(v) => format!("const:{v}"),
                    GammaSpec::LinearDecay(v) => format!("linear:{v}"),
                };
                let mut ratios = Vec::new();
                for case in &l.cases {
                    let res = emp_neu_topk(&l.stack(g, case, gamma)?, k, limits);
                    println!("{},{},{},{},{},{}", case.sample, case.target_label(), label, res.k(), res.k_tilde(), res.positive_ratio());
                    ratios.push(res.positive_ratio());
                }
                summary.push(json!({ "gamma": label, "mean_ratio": mean(&ratios) }));
            }
            eprintln!("{}", json!({ "cases": l.cases.len(), "k": k, "ratios": summary }));
        }
    }
    Ok(())
}
