//! LRP-γ relevance transition tensors for GCN / GIN layer stacks.
//!
//! For walk layer `l` the transition from `(m', n')` at layer `l+1` back to
//! `(m, n)` at layer `l` is
//!
//! ```text
//! T[m, n, m', n'] = flow(m -> m') · H[m, n] · W↑[n, n'] / Σ_{m'', n''} flow(m'' -> m') · H[m'', n''] · W↑[n'', n']
//! ```
//!
//! with `W↑ = W + γ·max(0, W)`. Columns whose denominator falls below
//! `eps` are zeroed, so every column sums to exactly 0 or 1 (up to
//! rounding). A GIN block contributes the product of its Λ-mixing
//! sub-layer and its node-local second MLP layer.
//!
//! The stack is either materialized (one dense `N_l x N_{l+1}` slice per
//! nonzero adjacency entry) or factorized, in which case entries and
//! matrix-vector products are evaluated on demand from `{Λ, H, W↑}`.

use std::borrow::Cow;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{AdjacencyMode, ForwardPass, GnnModel, Target, Task};

/// Default threshold below which a propagation column is zeroed.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Default cap on `L·M²·N̄²` for materialized stacks.
pub const DEFAULT_MATERIALIZE_BUDGET: u128 = 100_000_000;

/// Per-layer γ values of the LRP-γ rule, indexed from the input side.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule(Vec<f64>);

impl GammaSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(g) = values.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::param("gamma", format!("{g} is negative")));
        }
        Ok(Self(values))
    }

    pub fn constant(gamma: f64, depth: usize) -> Result<Self> {
        Self::new(vec![gamma; depth])
    }

    /// `γ_l = γ_max · (1 − l/(L−1))`; a single layer gets `γ_max`.
    pub fn linear_decay(gamma_max: f64, depth: usize) -> Result<Self> {
        if depth <= 1 {
            return Self::new(vec![gamma_max; depth]);
        }
        let last = (depth - 1) as f64;
        Self::new((0..depth).map(|l| gamma_max * (1.0 - l as f64 / last)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, layer: usize) -> f64 {
        self.0[layer]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Textual schedule spec: `const:X` or `linear:X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    Constant(f64),
    LinearDecay(f64),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::LinearDecay(3.0)
    }
}

impl GammaSpec {
    pub fn schedule(self, depth: usize) -> Result<GammaSchedule> {
        match self {
            GammaSpec::Constant(g) => GammaSchedule::constant(g, depth),
            GammaSpec::LinearDecay(g) => GammaSchedule::linear_decay(g, depth),
        }
    }
}

impl std::str::FromStr for GammaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').ok_or_else(|| Error::param("gamma", "expected const:X or linear:X"))?;
        let v: f64 = value.parse().map_err(|_| Error::param("gamma", format!("`{value}` is not a number")))?;
        if !(v >= 0.0) {
            return Err(Error::param("gamma", format!("{v} is negative")));
        }
        match kind {
            "const" => Ok(GammaSpec::Constant(v)),
            "linear" => Ok(GammaSpec::LinearDecay(v)),
            _ => Err(Error::param("gamma", format!("unknown schedule `{kind}`"))),
        }
    }
}

/// `W↑ = W + γ·max(0, W)`.
pub fn modified_weight(w: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::param("gamma", format!("{gamma} is negative")));
    }
    Ok(w.mapv(|v| v + gamma * v.max(0.0)))
}

/// Replaces every column of a slice with the average column.
pub fn column_average(slice: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = slice.dim();
    if cols == 0 {
        return slice.clone();
    }
    let mut out = Array2::zeros((rows, cols));
    for (i, row) in slice.rows().into_iter().enumerate() {
        let mean = row.sum() / cols as f64;
        out.row_mut(i).fill(mean);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stabilizer {
    /// Zero the whole column when `|denominator| < eps`.
    ZeroColumn,
    /// Add `eps·sign(denominator)` and never zero.
    SignMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryMode {
    /// Materialize when within budget, otherwise factorize.
    Auto,
    Materialized,
    Factorized,
}

#[derive(Debug, Clone)]
pub struct PropagationConfig {
    pub schedule: GammaSchedule,
    pub stabilizer: Stabilizer,
    pub eps: f64,
    pub memory: MemoryMode,
    pub materialize_budget: u128,
}

impl PropagationConfig {
    pub fn new(schedule: GammaSchedule) -> Self {
        Self {
            schedule,
            stabilizer: Stabilizer::ZeroColumn,
            eps: DEFAULT_EPS,
            memory: MemoryMode::Auto,
            materialize_budget: DEFAULT_MATERIALIZE_BUDGET,
        }
    }

    pub fn memory(mut self, memory: MemoryMode) -> Self {
        self.memory = memory;
        self
    }

    pub fn stabilizer(mut self, stabilizer: Stabilizer) -> Self {
        self.stabilizer = stabilizer;
        self
    }
}

/// One linear step `relu(A·H·W)` in factored form.
#[derive(Debug, Clone)]
struct SubLayer {
    mixes_nodes: bool,
    input: Array2<f64>,
    weight: Array2<f64>,
    /// Reciprocal denominators per `(m', n')`, 0 for zeroed columns.
    inv_denom: Array2<f64>,
}

impl SubLayer {
    /// `bias` enters only the denominator, as an input with constant activation 1.
    fn new(
        mixes_nodes: bool,
        input: Array2<f64>,
        weight: Array2<f64>,
        bias: Option<Array1<f64>>,
        graph: &Graph,
        cfg: &PropagationConfig,
    ) -> Self {
        let hw = input.dot(&weight);
        let mut denom = if mixes_nodes { graph.adjacency().dot(&hw) } else { hw };
        if let Some(b) = bias {
            denom += &b;
        }
        let inv_denom = denom.mapv(|d| match cfg.stabilizer {
            Stabilizer::ZeroColumn => {
                if d.abs() < cfg.eps {
                    0.0
                } else {
                    1.0 / d
                }
            }
            Stabilizer::SignMatched => 1.0 / (d + cfg.eps.copysign(d)),
        });
        Self { mixes_nodes, input, weight, inv_denom }
    }

    #[inline]
    fn flow(&self, graph_adj: &Array2<f64>, m: usize, m2: usize) -> f64 {
        if self.mixes_nodes {
            graph_adj[[m2, m]]
        } else if m == m2 {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    fn entry(&self, flow: f64, m: usize, n: usize, m2: usize, n2: usize) -> f64 {
        flow * self.input[[m, n]] * self.weight[[n, n2]] * self.inv_denom[[m2, n2]]
    }

    /// `q = W↑ · (inv_denom[m2] ⊙ v)`, so that `(T^{m,m2} v)[n] = flow · H[m,n] · q[n]`.
    fn prepare(&self, m2: usize, v: &[f64]) -> Vec<f64> {
        let inv = self.inv_denom.row(m2);
        let scaled: Vec<f64> = v.iter().zip(inv.iter()).map(|(a, b)| a * b).collect();
        self.weight.rows().into_iter().map(|row| dot(row, &scaled)).collect()
    }
}

#[inline]
fn dot(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
struct WalkLayer {
    /// First sub-layer may mix nodes; the optional second is node-local.
    subs: Vec<SubLayer>,
    /// Successor lists `m -> [m']` with nonzero flow, ascending.
    successors: Vec<Vec<usize>>,
    /// Materialized slices aligned with `successors`.
    slices: Option<Vec<Vec<Array2<f64>>>>,
    in_width: usize,
    out_width: usize,
}

/// Vector prepared for repeated `T^{l,m,m'} v` products sharing `(l, m', v)`.
#[derive(Debug, Clone)]
pub struct Prepared {
    m2: usize,
    data: Vec<f64>,
}

/// Relevance transition tensors plus output-layer relevance.
#[derive(Debug, Clone)]
pub struct PropagationStack {
    adjacency: Array2<f64>,
    layers: Vec<WalkLayer>,
    output: Array2<f64>,
    widths: Vec<usize>,
    materialized: bool,
}

impl PropagationStack {
    pub fn build(model: &GnnModel, graph: &Graph, pass: &ForwardPass, target: Target, cfg: &PropagationConfig) -> Result<Self> {
        let output = init_output_relevance(model, pass, target)?;
        Self::build_with_relevance(model, graph, pass, output, cfg)
    }

    /// Builds the stack with an explicitly supplied output relevance `M x N^(L)`.
    pub fn build_with_relevance(
        model: &GnnModel,
        graph: &Graph,
        pass: &ForwardPass,
        output: Array2<f64>,
        cfg: &PropagationConfig,
    ) -> Result<Self> {
        let depth = model.depth();
        let widths = model.widths();
        let m = graph.num_nodes();
        check_pass(model, graph, pass)?;
        if cfg.schedule.len() != depth {
            return Err(Error::param("gamma", format!("schedule has {} entries for {depth} layers", cfg.schedule.len())));
        }
        if output.dim() != (m, widths[depth]) {
            return Err(Error::Consistency(format!("output relevance has shape {:?}", output.dim())));
        }
        let nbar = *widths.iter().max().unwrap() as u128;
        let cost = depth as u128 * (m as u128).pow(2) * nbar * nbar;
        let materialize = match cfg.memory {
            MemoryMode::Factorized => false,
            MemoryMode::Auto | MemoryMode::Materialized => cost <= cfg.materialize_budget,
        };

        let mut layers = Vec::with_capacity(depth);
        for (l, spec) in model.layers().iter().enumerate() {
            let gamma = cfg.schedule.get(l);
            let mixes = spec.adjacency_mode == AdjacencyMode::UsesLambda;
            let bias = |b: &Option<Array1<f64>>| b.as_ref().map(|b| b.mapv(|v| v + gamma * v.max(0.0)));
            let mut subs = vec![SubLayer::new(
                mixes,
                pass.hidden[l].clone(),
                modified_weight(&spec.weight, gamma)?,
                bias(&spec.bias),
                graph,
                cfg,
            )];
            if let Some(w2) = &spec.hidden_weight {
                let mid = pass.mid[l].clone().ok_or_else(|| Error::Consistency(format!("layer {l} lacks MLP activations")))?;
                subs.push(SubLayer::new(false, mid, modified_weight(w2, gamma)?, bias(&spec.hidden_bias), graph, cfg));
            }
            let successors = (0..m)
                .map(|from| if mixes { (0..m).filter(|&to| graph.flow(from, to) != 0.0).collect() } else { vec![from] })
                .collect();
            layers.push(WalkLayer { subs, successors, slices: None, in_width: widths[l], out_width: widths[l + 1] });
        }
        let mut stack = Self { adjacency: graph.adjacency().clone(), layers, output, widths, materialized: false };
        if materialize {
            for l in 0..depth {
                let slices = (0..m)
                    .map(|from| {
                        stack.layers[l].successors[from].iter().map(|&to| stack.compute_slice(l, from, to)).collect()
                    })
                    .collect();
                stack.layers[l].slices = Some(slices);
            }
            stack.materialized = true;
        }
        Ok(stack)
    }

    /// Network depth `L` (number of walk steps).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// `N^(l)` for `l = 0..=L`.
    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized
    }

    /// Output relevance `r^{L,m}` as an `M x N^(L)` matrix.
    pub fn output_relevance(&self) -> &Array2<f64> {
        &self.output
    }

    /// Nodes `m'` reachable from `m` in walk layer `l` (nonzero factor).
    pub fn successors(&self, layer: usize, m: usize) -> &[usize] {
        &self.layers[layer].successors[m]
    }

    pub fn is_step(&self, layer: usize, m: usize, m2: usize) -> bool {
        self.layers[layer].successors[m].binary_search(&m2).is_ok()
    }

    /// Single tensor entry `T^(l)[m, n, m', n']`.
    pub fn entry(&self, layer: usize, m: usize, n: usize, m2: usize, n2: usize) -> f64 {
        let wl = &self.layers[layer];
        let Ok(pos) = wl.successors[m].binary_search(&m2) else {
            return 0.0;
        };
        match &wl.slices {
            Some(s) => s[m][pos][[n, n2]],
            None => self.factor_entry(layer, m, n, m2, n2),
        }
    }

    fn factor_entry(&self, layer: usize, m: usize, n: usize, m2: usize, n2: usize) -> f64 {
        let wl = &self.layers[layer];
        let first = &wl.subs[0];
        let flow = first.flow(&self.adjacency, m, m2);
        match wl.subs.get(1) {
            None => first.entry(flow, m, n, m2, n2),
            Some(second) => {
                let mut acc = 0.0;
                for k in 0..first.weight.ncols() {
                    acc += first.entry(flow, m, n, m2, k) * second.entry(1.0, m2, k, m2, n2);
                }
                acc
            }
        }
    }

    fn compute_slice(&self, layer: usize, m: usize, m2: usize) -> Array2<f64> {
        let wl = &self.layers[layer];
        Array2::from_shape_fn((wl.in_width, wl.out_width), |(n, n2)| self.factor_entry(layer, m, n, m2, n2))
    }

    /// Slice `T^{l,m,m'}` of shape `N^(l) x N^(l+1)`, `None` when the step has zero flow.
    pub fn slice(&self, layer: usize, m: usize, m2: usize) -> Option<Cow<'_, Array2<f64>>> {
        let wl = &self.layers[layer];
        let pos = wl.successors[m].binary_search(&m2).ok()?;
        Some(match &wl.slices {
            Some(s) => Cow::Borrowed(&s[m][pos]),
            None => Cow::Owned(self.compute_slice(layer, m, m2)),
        })
    }

    /// Prepares `v` (indexed by `n'` at layer `l+1`, node `m'`) for
    /// repeated products with `T^{l,m,m'}` over varying `m`.
    pub fn prepare(&self, layer: usize, m2: usize, v: &[f64]) -> Prepared {
        let wl = &self.layers[layer];
        if wl.slices.is_some() {
            return Prepared { m2, data: v.to_vec() };
        }
        let data = match wl.subs.get(1) {
            None => wl.subs[0].prepare(m2, v),
            Some(second) => {
                let q = second.prepare(m2, v);
                let h = second.input.row(m2);
                let u: Vec<f64> = h.iter().zip(&q).map(|(a, b)| a * b).collect();
                wl.subs[0].prepare(m2, &u)
            }
        };
        Prepared { m2, data }
    }

    /// `out = T^{l,m,m'} v` with `v` given in prepared form.
    pub fn apply_prepared(&self, layer: usize, m: usize, p: &Prepared, out: &mut [f64]) {
        let wl = &self.layers[layer];
        let Ok(pos) = wl.successors[m].binary_search(&p.m2) else {
            out.fill(0.0);
            return;
        };
        match &wl.slices {
            Some(s) => {
                for (o, row) in out.iter_mut().zip(s[m][pos].rows()) {
                    *o = dot(row, &p.data);
                }
            }
            None => {
                let first = &wl.subs[0];
                let flow = first.flow(&self.adjacency, m, p.m2);
                for ((o, h), q) in out.iter_mut().zip(first.input.row(m).iter()).zip(&p.data) {
                    *o = flow * h * q;
                }
            }
        }
    }

    /// `Σ_{n,n'} T^{l,m,m'}[n,n'] v[n']` with `v` given in prepared form.
    pub fn objective_prepared(&self, layer: usize, m: usize, p: &Prepared) -> f64 {
        let wl = &self.layers[layer];
        let Ok(pos) = wl.successors[m].binary_search(&p.m2) else {
            return 0.0;
        };
        match &wl.slices {
            Some(s) => s[m][pos].rows().into_iter().map(|row| dot(row, &p.data)).sum(),
            None => {
                let first = &wl.subs[0];
                let flow = first.flow(&self.adjacency, m, p.m2);
                flow * dot(first.input.row(m), &p.data)
            }
        }
    }

    /// `T^{l,m,m'} v`.
    pub fn apply(&self, layer: usize, m: usize, m2: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.widths[layer]];
        self.apply_prepared(layer, m, &self.prepare(layer, m2, v), &mut out);
        out
    }

    /// Node-level step objective `Σ_{n,n'} T^{l,m,m'}[n,n'] v[n']`.
    pub fn step_objective(&self, layer: usize, m: usize, m2: usize, v: &[f64]) -> f64 {
        self.objective_prepared(layer, m, &self.prepare(layer, m2, v))
    }

    /// Debug dump of one slice as CSV (`n,n2,value`).
    pub fn slice_csv(&self, layer: usize, m: usize, m2: usize) -> String {
        let mut out = String::from("n,n2,value\n");
        if let Some(s) = self.slice(layer, m, m2) {
            for ((n, n2), v) in s.indexed_iter() {
                let _ = writeln!(out, "{n},{n2},{v}");
            }
        }
        out
    }
}

fn check_pass(model: &GnnModel, graph: &Graph, pass: &ForwardPass) -> Result<()> {
    let widths = model.widths();
    if pass.hidden.len() != model.depth() + 1 {
        return Err(Error::Consistency(format!("{} activation matrices for depth {}", pass.hidden.len(), model.depth())));
    }
    for (l, (h, w)) in pass.hidden.iter().zip(&widths).enumerate() {
        if h.dim() != (graph.num_nodes(), *w) {
            return Err(Error::Consistency(format!("H^({l}) has shape {:?}, expected ({}, {w})", h.dim(), graph.num_nodes())));
        }
    }
    Ok(())
}

/// LRP-0 through the linear readout: `r^{L,m}_n` decomposes the target logit.
pub fn init_output_relevance(model: &GnnModel, pass: &ForwardPass, target: Target) -> Result<Array2<f64>> {
    let h = pass.output();
    let (m, n) = h.dim();
    let classes = model.num_classes();
    let head = model.readout().head.as_ref();
    let coeff = |k: usize, class: usize| -> f64 {
        match head {
            Some(w) => w[[k, class]],
            None => (k == class) as u8 as f64,
        }
    };
    let mut r = Array2::zeros((m, n));
    match (model.task(), target) {
        (Task::Graph, Target::Class(c)) => {
            if c >= classes {
                return Err(Error::param("target", format!("class {c} out of range for {classes} classes")));
            }
            for ((i, k), v) in r.indexed_iter_mut() {
                *v = h[[i, k]] * coeff(k, c);
            }
        }
        (Task::Node, Target::NodeClass { node, class }) => {
            if node >= m {
                return Err(Error::param("target", format!("node {node} out of range for {m} nodes")));
            }
            if class >= classes {
                return Err(Error::param("target", format!("class {class} out of range for {classes} classes")));
            }
            for k in 0..n {
                r[[node, k]] = h[[node, k]] * coeff(k, class);
            }
        }
        (task, target) => {
            return Err(Error::param("target", format!("{target:?} does not match {task:?} task")));
        }
    }
    Ok(r)
}
