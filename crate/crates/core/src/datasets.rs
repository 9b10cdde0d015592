//! Synthetic benchmarks: BA-2motif graph classification and SI-model
//! infection node classification with recorded infection chains.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{matrix_to_rows, AdjacencyOptions, Graph, GraphFile, Label};
use crate::io;
use crate::par;

/// Class 0 motif: a square with a roof, 6 edges on 5 nodes.
pub const HOUSE_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)];
/// Class 1 motif: a 5-cycle.
pub const CYCLE_EDGES: [(usize, usize); 5] = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)];

/// One BA-2motif sample before conversion to a [`Graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotifSample {
    pub num_nodes: usize,
    /// Undirected edges `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    /// Edges inside the attached motif, in the same form.
    pub motif_edges: Vec<(usize, usize)>,
    pub label: usize,
}

impl MotifSample {
    pub fn to_graph(&self) -> Graph {
        let feats = Array2::ones((self.num_nodes, 1));
        Graph::from_edges(self.num_nodes, &self.edges, feats, Some(Label::Class(self.label)), AdjacencyOptions::default())
            .expect("generated edges are in range")
    }

    fn to_file(&self) -> GraphFile {
        GraphFile {
            num_nodes: self.num_nodes,
            edges: Some(self.edges.iter().map(|&(a, b)| [a, b]).collect()),
            dense: None,
            features: vec![vec![1.0]; self.num_nodes],
            label: Some(Label::Class(self.label)),
            directed: false,
            self_loops: true,
            normalize: false,
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Barabási–Albert tree: each new node attaches to one existing node
/// chosen with probability proportional to its degree.
fn ba_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = vec![(0, 1)];
    let mut degree = vec![1usize, 1];
    for v in 2..n {
        let pick = WeightedIndex::new(&degree).expect("positive degrees").sample(rng);
        edges.push((pick, v));
        degree[pick] += 1;
        degree.push(1);
    }
    edges
}

/// `n_graphs` samples with alternating labels: house (0) and cycle (1).
pub fn gen_ba2motif(n_graphs: usize, base_size: usize, seed: u64) -> Result<Vec<MotifSample>> {
    if base_size < 5 {
        return Err(Error::param("base_size", format!("{base_size} < 5")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_graphs)
        .map(|i| {
            let label = i % 2;
            let mut edges = ba_tree(base_size, &mut rng);
            let template: &[(usize, usize)] = if label == 0 { &HOUSE_EDGES } else { &CYCLE_EDGES };
            let motif_edges: Vec<_> =
                template.iter().map(|&(a, b)| ordered(a + base_size, b + base_size)).collect();
            edges.extend(&motif_edges);
            let anchor = rng.gen_range(0..base_size);
            edges.push((anchor, base_size));
            MotifSample { num_nodes: base_size + 5, edges, motif_edges, label }
        })
        .collect();
    Ok(samples)
}

/// Manifest written next to generated sample files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn write_ba2motif_dir(dir: &Path, samples: &[MotifSample], seed: u64, base_size: usize) -> Result<()> {
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("graph_{i:05}.json");
        io::write_json(&dir.join(&name), &s.to_file())?;
        files.push(name);
    }
    let config = serde_json::json!({ "n_graphs": samples.len(), "base_size": base_size });
    io::write_json(&dir.join(MANIFEST), &Manifest { kind: "ba2motif".into(), seed, config, files })
}

/// Loads every graph listed in a dataset directory's manifest.
pub fn load_graph_dir(dir: &Path) -> Result<(Manifest, Vec<Graph>)> {
    let manifest: Manifest = io::read_json(&dir.join(MANIFEST))?;
    let graphs = manifest.files.iter().map(|f| Graph::load(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    Ok((manifest, graphs))
}

/// Parameters of an infection scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionConfig {
    pub num_nodes: usize,
    pub steps: usize,
    pub lambda: f64,
    pub carrier_frac: f64,
    /// Expected out-degree of the directed Erdős–Rényi interaction graph.
    #[serde(default = "default_out_degree")]
    pub out_degree: f64,
}

fn default_out_degree() -> f64 {
    4.0
}

impl InfectionConfig {
    pub fn new(num_nodes: usize, steps: usize, lambda: f64, carrier_frac: f64) -> Self {
        Self { num_nodes, steps, lambda, carrier_frac, out_degree: default_out_degree() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param("lambda", format!("{} outside [0, 1]", self.lambda)));
        }
        if !(self.carrier_frac > 0.0 && self.carrier_frac < 1.0) {
            return Err(Error::param("carrier_frac", format!("{} outside (0, 1)", self.carrier_frac)));
        }
        if self.num_nodes < 2 || self.steps == 0 {
            return Err(Error::param("infection", "need at least 2 nodes and 1 step"));
        }
        if self.out_degree < 0.0 {
            return Err(Error::param("out_degree", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn num_carriers(&self) -> usize {
        ((self.carrier_frac * self.num_nodes as f64).ceil() as usize).clamp(1, self.num_nodes)
    }
}

/// Recorded infection chain ending at `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionChain {
    pub target: usize,
    /// Carrier first, `target` last; at most `steps + 1` nodes.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionScenario {
    pub config: InfectionConfig,
    pub num_nodes: usize,
    /// Directed interaction edges `(from, to)`.
    pub edges: Vec<(usize, usize)>,
    pub carriers: Vec<usize>,
    pub lambda: f64,
    pub steps: usize,
    /// 1 if infected after `steps` steps (carriers included).
    pub labels: Vec<u8>,
    pub chains: Vec<InfectionChain>,
}

impl InfectionScenario {
    /// Node features: one-hot `[carrier, non-carrier]`.
    pub fn features(&self) -> Array2<f64> {
        let mut f = Array2::zeros((self.num_nodes, 2));
        for m in 0..self.num_nodes {
            f[[m, 1]] = 1.0;
        }
        for &c in &self.carriers {
            f[[c, 0]] = 1.0;
            f[[c, 1]] = 0.0;
        }
        f
    }

    pub fn graph(&self) -> Graph {
        let opts = AdjacencyOptions { directed: true, ..AdjacencyOptions::default() };
        Graph::from_edges(self.num_nodes, &self.edges, self.features(), Some(Label::Nodes(self.labels.clone())), opts)
            .expect("generated edges are in range")
    }

    pub fn graph_file(&self) -> GraphFile {
        GraphFile {
            num_nodes: self.num_nodes,
            edges: Some(self.edges.iter().map(|&(a, b)| [a, b]).collect()),
            dense: None,
            features: matrix_to_rows(&self.features()),
            label: Some(Label::Nodes(self.labels.clone())),
            directed: true,
            self_loops: true,
            normalize: false,
        }
    }

    pub fn chain_of(&self, node: usize) -> Option<&InfectionChain> {
        self.chains.iter().find(|c| c.target == node)
    }

    fn out_lists(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }
}

/// Outcome of one SI run: for each node, the step it was infected at and
/// every node that successfully transmitted to it in that step.
struct SiRun {
    infected_at: Vec<Option<usize>>,
    infectors: Vec<Vec<usize>>,
}

fn simulate(out: &[Vec<usize>], carriers: &[usize], lambda: f64, steps: usize, rng: &mut impl Rng) -> SiRun {
    let m = out.len();
    let mut infected_at = vec![None; m];
    let mut infectors = vec![Vec::new(); m];
    for &c in carriers {
        infected_at[c] = Some(0);
    }
    for step in 1..=steps {
        let active: Vec<usize> = (0..m).filter(|&u| infected_at[u].is_some()).collect();
        let mut newly = BTreeSet::new();
        for u in active {
            for &v in &out[u] {
                if infected_at[v].is_some() {
                    continue;
                }
                if rng.gen::<f64>() < lambda {
                    infectors[v].push(u);
                    newly.insert(v);
                }
            }
        }
        for v in newly {
            infected_at[v] = Some(step);
        }
    }
    SiRun { infected_at, infectors }
}

/// Generates the interaction graph, the carriers, and one SI realisation.
pub fn gen_infection(config: &InfectionConfig, seed: u64) -> Result<InfectionScenario> {
    config.validate()?;
    let m = config.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (config.out_degree / (m - 1) as f64).min(1.0);
    let mut edges = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if a != b && rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let mut carriers = rand::seq::index::sample(&mut rng, m, config.num_carriers()).into_vec();
    carriers.sort_unstable();
    let mut scenario = InfectionScenario {
        config: config.clone(),
        num_nodes: m,
        edges,
        carriers,
        lambda: config.lambda,
        steps: config.steps,
        labels: vec![0; m],
        chains: Vec::new(),
    };
    let run = simulate(&scenario.out_lists(), &scenario.carriers, config.lambda, config.steps, &mut rng);
    // Chains through the smallest-index infector, built in infection order.
    let mut chain: Vec<Option<Vec<usize>>> = vec![None; m];
    for &c in &scenario.carriers {
        chain[c] = Some(vec![c]);
    }
    for step in 1..=config.steps {
        for v in 0..m {
            if run.infected_at[v] == Some(step) {
                let u = *run.infectors[v].iter().min().expect("infected nodes have an infector");
                let mut c = chain[u].clone().expect("infector was infected earlier");
                c.push(v);
                chain[v] = Some(c);
            }
        }
    }
    for v in 0..m {
        if run.infected_at[v].is_some() {
            scenario.labels[v] = 1;
        }
        if run.infected_at[v].is_some_and(|s| s > 0) {
            scenario.chains.push(InfectionChain { target: v, nodes: chain[v].take().unwrap() });
        }
    }
    Ok(scenario)
}

/// Monte-Carlo infection and chain probabilities over `q` re-simulations
/// on the scenario's fixed graph and carriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub q: usize,
    /// `x(m) / Q`.
    pub node_prob: Vec<f64>,
    /// `y(c) / Q` for every chain observed at least once, sorted by chain.
    pub chain_prob: Vec<(Vec<usize>, f64)>,
}

impl OracleEstimate {
    /// Possible chains ending at `target`.
    pub fn chains_to(&self, target: usize) -> impl Iterator<Item = &(Vec<usize>, f64)> {
        self.chain_prob.iter().filter(move |(c, _)| c.last() == Some(&target))
    }
}

/// Every chain realised in one run: all transmission paths, not only the
/// smallest-index one.
fn run_chains(run: &SiRun, carriers: &[usize], steps: usize) -> BTreeSet<Vec<usize>> {
    let m = run.infected_at.len();
    let mut per_node: Vec<Vec<Vec<usize>>> = vec![Vec::new(); m];
    for &c in carriers {
        per_node[c].push(vec![c]);
    }
    for step in 1..=steps {
        for v in 0..m {
            if run.infected_at[v] != Some(step) {
                continue;
            }
            let mut chains = Vec::new();
            for &u in &run.infectors[v] {
                for c in &per_node[u] {
                    let mut c = c.clone();
                    c.push(v);
                    chains.push(c);
                }
            }
            per_node[v] = chains;
        }
    }
    per_node.into_iter().flatten().filter(|c| c.len() > 1).collect()
}

pub fn oracle_estimate(scenario: &InfectionScenario, q: usize, seed: u64) -> Result<OracleEstimate> {
    if q == 0 {
        return Err(Error::param("q", "need at least one simulation"));
    }
    let out = scenario.out_lists();
    let runs = par::map_range(q, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        let run = simulate(&out, &scenario.carriers, scenario.lambda, scenario.steps, &mut rng);
        let infected: Vec<bool> = run.infected_at.iter().map(Option::is_some).collect();
        (infected, run_chains(&run, &scenario.carriers, scenario.steps))
    });
    let mut node_count = vec![0usize; scenario.num_nodes];
    let mut chain_count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (infected, chains) in runs {
        for (c, i) in node_count.iter_mut().zip(infected) {
            *c += usize::from(i);
        }
        for c in chains {
            *chain_count.entry(c).or_default() += 1;
        }
    }
    let qf = q as f64;
    Ok(OracleEstimate {
        q,
        node_prob: node_count.into_iter().map(|c| c as f64 / qf).collect(),
        chain_prob: chain_count.into_iter().map(|(c, n)| (c, n as f64 / qf)).collect(),
    })
}

pub fn write_infection_dir(dir: &Path, scenarios: &[InfectionScenario], seed: u64) -> Result<()> {
    let mut files = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        let name = format!("scenario_{i:05}.json");
        s.save(&dir.join(&name))?;
        files.push(name);
    }
    let config = serde_json::to_value(scenarios.first().map(|s| &s.config)).expect("config serializes");
    io::write_json(&dir.join(MANIFEST), &Manifest { kind: "infection".into(), seed, config, files })
}

pub fn load_infection_dir(dir: &Path) -> Result<(Manifest, Vec<InfectionScenario>)> {
    let manifest: Manifest = io::read_json(&dir.join(MANIFEST))?;
    let scenarios = manifest.files.iter().map(|f| InfectionScenario::load(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenarios))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motif_samples_have_expected_shape() {
        let samples = gen_ba2motif(10, 20, 1).unwrap();
        for s in &samples {
            assert_eq!(s.num_nodes, 25);
            assert_eq!(s.motif_edges.len(), if s.label == 0 { 6 } else { 5 });
            // Tree (19) + motif + bridge.
            assert_eq!(s.edges.len(), 19 + s.motif_edges.len() + 1);
        }
        assert_eq!(samples.iter().filter(|s| s.label == 0).count(), 5);
        assert!(gen_ba2motif(1, 4, 0).is_err());
    }

    #[test]
    fn motif_generation_is_deterministic() {
        assert_eq!(gen_ba2motif(6, 20, 9).unwrap(), gen_ba2motif(6, 20, 9).unwrap());
        assert_ne!(gen_ba2motif(6, 20, 9).unwrap(), gen_ba2motif(6, 20, 10).unwrap());
    }

    fn path_scenario(lambda: f64) -> InfectionScenario {
        InfectionScenario {
            config: InfectionConfig::new(3, 2, lambda, 0.3),
            num_nodes: 3,
            edges: vec![(0, 1), (1, 2)],
            carriers: vec![0],
            lambda,
            steps: 2,
            labels: vec![1, 0, 0],
            chains: vec![],
        }
    }

    #[test]
    fn certain_spread_along_path() {
        let s = path_scenario(1.0);
        let est = oracle_estimate(&s, 20, 0).unwrap();
        assert_eq!(est.node_prob, vec![1.0, 1.0, 1.0]);
        assert_eq!(est.chain_prob, vec![(vec![0, 1], 1.0), (vec![0, 1, 2], 1.0)]);
        let none = oracle_estimate(&path_scenario(0.0), 5, 0).unwrap();
        assert_eq!(none.node_prob, vec![1.0, 0.0, 0.0]);
        assert!(none.chain_prob.is_empty());
    }

    #[test]
    fn recorded_chains_are_valid() {
        let cfg = InfectionConfig::new(120, 3, 0.6, 0.02);
        let s = gen_infection(&cfg, 4).unwrap();
        assert_eq!(s.carriers.len(), 3);
        let edges: BTreeSet<_> = s.edges.iter().copied().collect();
        for c in &s.chains {
            assert!(s.carriers.contains(&c.nodes[0]));
            assert_eq!(*c.nodes.last().unwrap(), c.target);
            assert!(c.nodes.len() <= cfg.steps + 1);
            assert!(c.nodes.windows(2).all(|w| edges.contains(&(w[0], w[1]))));
        }
        for m in 0..s.num_nodes {
            let expected = s.carriers.contains(&m) || s.chain_of(m).is_some();
            assert_eq!(s.labels[m] == 1, expected);
        }
        assert_eq!(s, gen_infection(&cfg, 4).unwrap());
    }

    #[test]
    fn lambda_zero_infects_only_carriers() {
        let s = gen_infection(&InfectionConfig::new(50, 3, 0.0, 0.1), 2).unwrap();
        assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 5);
        assert!(s.chains.is_empty());
    }

    #[test]
    fn oracle_chains_are_paths_from_carriers() {
        let s = gen_infection(&InfectionConfig::new(60, 3, 0.6, 0.05), 7).unwrap();
        let est = oracle_estimate(&s, 200, 1).unwrap();
        let edges: BTreeSet<_> = s.edges.iter().copied().collect();
        for (c, p) in &est.chain_prob {
            assert!(*p > 0.0 && *p <= 1.0);
            assert!(s.carriers.contains(&c[0]));
            assert!(c.len() <= 4);
            assert!(c.windows(2).all(|w| edges.contains(&(w[0], w[1]))));
        }
        assert!(est.node_prob.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn full_scale_config_parses() {
        let text = r#"{"num_nodes":1000,"steps":4,"lambda":0.6,"carrier_frac":0.02}"#;
        let cfg: InfectionConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_carriers(), 20);
        assert_eq!(cfg.out_degree, 4.0);
    }

    #[test]
    fn scenario_round_trips() {
        let s = gen_infection(&InfectionConfig::new(30, 2, 0.5, 0.1), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_infection_dir(dir.path(), std::slice::from_ref(&s), 3).unwrap();
        let (m, back) = load_infection_dir(dir.path()).unwrap();
        assert_eq!(m.kind, "infection");
        assert_eq!(back[0], s);
        assert_eq!(back[0].graph(), s.graph());
    }
}
