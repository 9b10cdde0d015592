use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relwalk::amp_ave::amp_ave_topk;
use relwalk::emp_neu::emp_neu_topk;
use relwalk::oracle::{exhaustive_topk_node, DEFAULT_ENUMERATION_BUDGET};
use relwalk::par;
use relwalk::search::SearchLimits;
use relwalk::synth::InstanceSpec;
use relwalk::walk::Ranking;

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn searches(c: &mut Criterion) {
    let inst = InstanceSpec::gcn(40, &[8, 16, 16, 2]).edge_prob(0.1).build(7);
    let stack = inst.stack();
    let limits = SearchLimits { max_extractions: Some(2000) };

    let mut group = c.benchmark_group("top20");
    for (name, seq) in MODES {
        par::force_sequential(seq);
        group.bench_with_input(BenchmarkId::new("emp_neu", name), &stack, |b, s| b.iter(|| emp_neu_topk(s, 20, limits)));
        group.bench_with_input(BenchmarkId::new("amp_ave", name), &stack, |b, s| b.iter(|| amp_ave_topk(s, 20, limits)));
    }
    group.finish();

    let small = InstanceSpec::gcn(12, &[4, 8, 8, 2]).build(3).stack();
    let mut group = c.benchmark_group("exhaustive_node_top10");
    group.sample_size(20);
    for (name, seq) in MODES {
        par::force_sequential(seq);
        group.bench_function(name, |b| b.iter(|| exhaustive_topk_node(&small, 10, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap()));
    }
    group.finish();
    par::force_sequential(false);
}

criterion_group!(benches, searches);
criterion_main!(benches);
