use std::time::Instant;

use clap::{Args, ValueEnum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relwalk::amp_ave::amp_ave_topk;
use relwalk::datasets::gen_ba2motif;
use relwalk::emp_neu::emp_neu_topk;
use relwalk::lrp::PropagationStack;
use relwalk::model::{Arch, GnnModel, Task};
use relwalk::oracle::{exhaustive_node_roots, node_walk_count};
use relwalk::search::SearchLimits;
use relwalk::walk::Ranking;

use crate::{invalid, sorted, Globals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMethod {
    AmpAve,
    EmpNeu,
    ExhaustiveNode,
}

impl BenchMethod {
    fn name(self) -> &'static str {
        match self {
            BenchMethod::AmpAve => "amp-ave",
            BenchMethod::EmpNeu => "emp-neu",
            BenchMethod::ExhaustiveNode => "exhaustive-node",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Graph sizes (BA tree plus a 5-node motif, so at least 10).
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25")]
    ms: Vec<usize>,
    /// Network depths.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    ls: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    hidden: usize,
    /// Repetitions per cell; the median is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "amp-ave,emp-neu,exhaustive-node")]
    methods: Vec<BenchMethod>,
}

/// GIN on a BA-2motif-shaped graph with random nonnegative node features.
fn instance(g: &Globals, m: usize, depth: usize, hidden: usize) -> anyhow::Result<PropagationStack> {
    let seed = g.seed ^ ((m as u64) << 32 | depth as u64);
    let sample = gen_ba2motif(1, m - 5, seed)?.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats = Array2::from_shape_fn((m, 1), |_| rng.gen_range(0.0..1.0));
    let graph = sample.to_graph().with_features(feats)?;
    let dims: Vec<usize> = std::iter::once(1).chain(std::iter::repeat(hidden).take(depth - 1)).chain([2]).collect();
    let model = GnnModel::random(Arch::Gin, &dims, Task::Graph, None, seed)?.with_nonnegative_last_layer();
    let pass = model.forward(&graph)?;
    let target = model.predicted_target(&pass, None)?;
    Ok(PropagationStack::build(&model, &graph, &pass, target, &g.propagation(depth)?)?)
}

/// Runs `method` once; returns seconds, work counter and whether the time is extrapolated.
fn run_once(g: &Globals, method: BenchMethod, s: &PropagationStack, k: usize) -> (f64, u64, bool) {
    let limits = SearchLimits::default();
    let t = Instant::now();
    match method {
        BenchMethod::AmpAve => {
            let r = amp_ave_topk(s, k, limits);
            (t.elapsed().as_secs_f64(), r.evaluations, false)
        }
        BenchMethod::EmpNeu => {
            let r = emp_neu_topk(s, k, limits);
            (t.elapsed().as_secs_f64(), r.evaluations, false)
        }
        BenchMethod::ExhaustiveNode => {
            let m = s.num_nodes();
            let total = node_walk_count(s);
            let per_root = total / m as u128;
            let roots = if total <= g.budget { m } else { ((g.budget / per_root.max(1)) as usize).clamp(1, m) };
            let root_list: Vec<usize> = (0..roots).collect();
            std::hint::black_box(exhaustive_node_roots(s, k, Ranking::Signed, &root_list));
            let secs = t.elapsed().as_secs_f64() * m as f64 / roots as f64;
            (secs, (per_root * roots as u128) as u64, roots < m)
        }
    }
}

pub fn run(g: &Globals, mut args: BenchArgs) -> anyhow::Result<()> {
    args.ms = sorted(args.ms);
    args.ls = sorted(args.ls);
    args.ks = sorted(args.ks);
    if args.reps == 0 || args.hidden == 0 {
        return Err(invalid("--reps and --hidden must be at least 1"));
    }
    if let Some(m) = args.ms.iter().find(|&&m| m < 10) {
        return Err(invalid(format!("graph size {m} is below 10")));
    }
    if args.ls.contains(&0) || args.ks.contains(&0) {
        return Err(invalid("depths and K must be at least 1"));
    }
    println!("method,M,L,K,seconds,reps,stddev,work,estimated");
    for &depth in &args.ls {
        for &m in &args.ms {
            let s = instance(g, m, depth, args.hidden)?;
            for &k in &args.ks {
                for &method in &args.methods {
                    let runs: Vec<(f64, u64, bool)> = (0..args.reps).map(|_| run_once(g, method, &s, k)).collect();
                    let mut secs: Vec<f64> = runs.iter().map(|r| r.0).collect();
                    secs.sort_by(f64::total_cmp);
                    let median = secs[secs.len() / 2];
                    let mean = secs.iter().sum::<f64>() / secs.len() as f64;
                    let std = (secs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / secs.len() as f64).sqrt();
                    let (_, work, estimated) = runs[0];
                    println!("{},{m},{depth},{k},{median:.6e},{},{std:.3e},{work},{estimated}", method.name(), args.reps);
                }
            }
        }
    }
    Ok(())
}
