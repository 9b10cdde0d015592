//! Seeded random GCN instances for tests, benchmarks and oracle checks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{AdjacencyOptions, Graph};
use crate::lrp::{GammaSpec, MemoryMode, PropagationConfig, PropagationStack};
use crate::model::{Arch, ForwardPass, GnnModel, Target, Task};

#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub num_nodes: usize,
    /// `N^(0) .. N^(L)`; the last entry is the number of classes.
    pub widths: Vec<usize>,
    /// Probability of each undirected edge.
    pub edge_prob: f64,
    pub arch: Arch,
    pub nonnegative_features: bool,
    pub gamma: GammaSpec,
    pub memory: MemoryMode,
}

impl InstanceSpec {
    pub fn gcn(num_nodes: usize, widths: &[usize]) -> Self {
        Self {
            num_nodes,
            widths: widths.to_vec(),
            edge_prob: 0.5,
            arch: Arch::Gcn,
            nonnegative_features: false,
            gamma: GammaSpec::default(),
            memory: MemoryMode::Auto,
        }
    }

    pub fn edge_prob(mut self, p: f64) -> Self {
        self.edge_prob = p;
        self
    }

    pub fn arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }

    pub fn nonnegative(mut self) -> Self {
        self.nonnegative_features = true;
        self
    }

    pub fn gamma(mut self, gamma: GammaSpec) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn memory(mut self, memory: MemoryMode) -> Self {
        self.memory = memory;
        self
    }

    pub fn build(&self, seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.num_nodes;
        let mut edges = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                if rng.gen_bool(self.edge_prob) {
                    edges.push((a, b));
                }
            }
        }
        let lo = if self.nonnegative_features { 0.0 } else { -1.0 };
        let feats = Array2::from_shape_fn((m, self.widths[0]), |_| rng.gen_range(lo..1.0));
        let graph = Graph::from_edges(m, &edges, feats, None, AdjacencyOptions::default()).expect("valid random graph");
        let model = GnnModel::random(self.arch, &self.widths, Task::Graph, None, rng.gen()).expect("valid widths");
        let pass = model.forward(&graph).expect("shapes chain");
        let target = Target::Class(pass.predicted_class(0));
        Instance { graph, model, pass, target, spec: self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub model: GnnModel,
    pub pass: ForwardPass,
    pub target: Target,
    spec: InstanceSpec,
}

impl Instance {
    pub fn config(&self) -> PropagationConfig {
        PropagationConfig::new(self.spec.gamma.schedule(self.model.depth()).expect("nonnegative gamma")).memory(self.spec.memory)
    }

    pub fn stack(&self) -> PropagationStack {
        PropagationStack::build(&self.model, &self.graph, &self.pass, self.target, &self.config()).expect("consistent instance")
    }

    pub fn stack_with(&self, cfg: &PropagationConfig) -> PropagationStack {
        PropagationStack::build(&self.model, &self.graph, &self.pass, self.target, cfg).expect("consistent instance")
    }
}
