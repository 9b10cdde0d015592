use proptest::prelude::*;

use relwalk::amp_ave::amp_ave_search;
use relwalk::emp_neu::{emp_neu_basic, emp_neu_search, emp_neu_topk};
use relwalk::lrp::{GammaSpec, PropagationStack};
use relwalk::metrics::{column_similarity_histogram, precision_recall};
use relwalk::model::{Arch, GnnModel};
use relwalk::oracle::{exhaustive_topk_neuron, exhaustive_topk_node, DEFAULT_ENUMERATION_BUDGET};
use relwalk::search::SearchLimits;
use relwalk::synth::{Instance, InstanceSpec};
use relwalk::walk::{neuron_walk_relevance, node_walk_relevance, tie_key, Ranking};

fn instance() -> impl Strategy<Value = Instance> {
    (
        any::<u64>(),
        2usize..6,
        prop::collection::vec(1usize..4, 3..5),
        prop::bool::ANY,
        prop::sample::select(vec![0.0, 0.2, 1.0]),
        prop::bool::ANY,
        0.2f64..1.0,
    )
        .prop_map(|(seed, m, widths, gin, g, decay, p)| {
            let gamma = if decay { GammaSpec::LinearDecay(3.0) } else { GammaSpec::Constant(g) };
            InstanceSpec::gcn(m, &widths).arch(if gin { Arch::Gin } else { Arch::Gcn }).gamma(gamma).edge_prob(p).build(seed)
        })
}

/// All `(nodes, neurons)` pairs for a small stack.
fn neuron_walks(s: &PropagationStack) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = vec![(Vec::new(), Vec::new())];
    for l in 0..=s.depth() {
        out = out
            .into_iter()
            .flat_map(|(m, n)| {
                (0..s.num_nodes()).flat_map(move |a| {
                    let (m, n) = (m.clone(), n.clone());
                    (0..s.width(l)).map(move |b| {
                        let mut m = m.clone();
                        let mut n = n.clone();
                        m.push(a);
                        n.push(b);
                        (m, n)
                    })
                })
            })
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_columns_sum_to_zero_or_one(inst in instance()) {
        let s = inst.stack();
        for l in 0..s.depth() {
            for m2 in 0..s.num_nodes() {
                for n2 in 0..s.width(l + 1) {
                    let mut sum = 0.0;
                    for m in 0..s.num_nodes() {
                        for n in 0..s.width(l) {
                            sum += s.entry(l, m, n, m2, n2);
                        }
                    }
                    prop_assert!(sum.abs() < 1e-9 || (sum - 1.0).abs() < 1e-9, "column ({l},{m2},{n2}) sums to {sum}");
                }
            }
        }
    }

    #[test]
    fn node_relevance_is_sum_of_neuron_relevances(inst in instance(), pick in any::<prop::sample::Index>()) {
        let s = inst.stack();
        let walks = neuron_walks(&s);
        let nodes = walks[pick.index(walks.len())].0.clone();
        let sum: f64 = walks
            .iter()
            .filter(|(m, _)| *m == nodes)
            .map(|(m, n)| neuron_walk_relevance(&s, m, n).unwrap())
            .sum();
        let node = node_walk_relevance(&s, &nodes).unwrap();
        prop_assert!((sum - node).abs() <= 1e-9 * sum.abs().max(1.0), "{sum} vs {node}");
    }

    #[test]
    fn scaling_output_relevance_scales_walks(inst in instance(), c in 0.1f64..10.0) {
        let cfg = inst.config();
        let s = inst.stack();
        let scaled = PropagationStack::build_with_relevance(
            &inst.model, &inst.graph, &inst.pass, s.output_relevance() * c, &cfg,
        ).unwrap();
        let a: Vec<_> = emp_neu_search(&s).take(5).collect();
        let b: Vec<_> = emp_neu_search(&scaled).take(5).collect();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.relevance * c - y.relevance).abs() <= 1e-9 * y.relevance.abs().max(1.0));
        }
    }

    #[test]
    fn emp_neu_top1_is_exact(inst in instance()) {
        let s = inst.stack();
        let oracle = exhaustive_topk_neuron(&s, 1, Ranking::Absolute, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let best = emp_neu_basic(&s);
        match best {
            Some(w) => prop_assert!((w.abs_relevance() - oracle[0].abs_relevance()).abs() <= 1e-12 * oracle[0].abs_relevance().max(1.0)),
            None => prop_assert_eq!(oracle[0].relevance, 0.0),
        }
    }

    #[test]
    fn search_extracts_distinct_walks_within_subset_bound(inst in instance()) {
        let s = inst.stack();
        let depth = s.depth();
        let mut search = amp_ave_search(&s);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..30 {
            let Some(w) = search.next() else { break };
            prop_assert_eq!(node_walk_relevance(&s, &w.nodes).unwrap(), w.relevance);
            prop_assert!(seen.insert(w.nodes.clone()), "walk {:?} extracted twice", w.nodes);
            prop_assert!(search.active_count() <= search.extracted() * depth + 1);
        }
    }

    #[test]
    fn tie_key_is_monotone_and_close(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tie_key(lo) <= tie_key(hi));
        prop_assert!((tie_key(a) - a).abs() <= a.abs() * 2f64.powi(-36));
    }

    #[test]
    fn model_json_round_trip(seed in any::<u64>(), gin in prop::bool::ANY, bias in prop::bool::ANY) {
        let arch = if gin { Arch::Gin } else { Arch::Gcn };
        let mut model = GnnModel::random(arch, &[2, 3, 2], relwalk::model::Task::Graph, None, seed).unwrap();
        if bias {
            model = model.with_zero_bias();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        prop_assert_eq!(GnnModel::load(&path).unwrap(), model);
    }

    #[test]
    fn emp_neu_results_are_prefixes(inst in instance(), k in 1usize..8) {
        let s = inst.stack();
        let long = emp_neu_topk(&s, 8, SearchLimits::default());
        let short = emp_neu_topk(&s, k, SearchLimits::default());
        prop_assert_eq!(&long.walks[..short.walks.len()], &short.walks[..]);
        prop_assert_eq!(&long.extracted[..short.extracted.len()], &short.extracted[..]);
    }

    #[test]
    fn emp_neu_work_is_polynomial(inst in instance(), k in 1usize..20) {
        let s = inst.stack();
        let res = emp_neu_topk(&s, k, SearchLimits::default());
        let (l, m) = (s.depth() as u64, s.num_nodes() as u64);
        let nbar = *s.widths().iter().max().unwrap() as u64;
        let bound = 4 * (l * m * m * nbar * nbar + res.k_tilde() as u64 * l * l * m * nbar);
        prop_assert!(res.evaluations <= bound, "{} > {}", res.evaluations, bound);
    }

    #[test]
    fn recall_grows_with_k(inst in instance()) {
        let s = inst.stack();
        let approx: Vec<_> = amp_ave_search(&s).take(20).collect();
        let exact = exhaustive_topk_node(&s, 10, Ranking::Signed, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let ks: Vec<usize> = (1..=20).collect();
        let pts = precision_recall(&approx, &exact, &ks, &[10]);
        for pair in pts.windows(2) {
            prop_assert!(pair[0].recall <= pair[1].recall);
        }
        prop_assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall)));
    }

    #[test]
    fn histogram_counts_every_included_column(inst in instance(), bins in 1usize..30) {
        let h = column_similarity_histogram(&inst.stack(), bins);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), h.columns);
        prop_assert!(h.columns == 0 || (-1.0..=1.0).contains(&h.mean));
    }
}
