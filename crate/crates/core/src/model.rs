//! GCN / GIN layer stacks, the forward pass and the model file format.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{matrix_from_rows, matrix_to_rows, Graph};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencyMode {
    #[serde(rename = "uses-lambda", alias = "lambda")]
    UsesLambda,
    #[serde(rename = "identity")]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "graph-classification", alias = "graph")]
    Graph,
    #[serde(rename = "node-classification", alias = "node")]
    Node,
}

/// Architecture family used when initialising fresh models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gin,
}

/// One message-passing block: aggregate with Λ (or not), then
/// `relu(Z·W)`, optionally followed by a second `relu(·W2)` for the
/// two-layer MLP combine of GIN. Optional biases are added before each
/// ReLU; relevance propagation ignores them.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub weight: Array2<f64>,
    pub hidden_weight: Option<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
    pub hidden_bias: Option<Array1<f64>>,
    pub adjacency_mode: AdjacencyMode,
}

impl LayerSpec {
    pub fn gcn(weight: Array2<f64>) -> Self {
        Self { weight, hidden_weight: None, bias: None, hidden_bias: None, adjacency_mode: AdjacencyMode::UsesLambda }
    }

    pub fn gin(weight: Array2<f64>, hidden_weight: Array2<f64>) -> Self {
        Self { hidden_weight: Some(hidden_weight), ..Self::gcn(weight) }
    }

    /// Adds zero biases to every sub-layer that lacks one.
    pub fn with_zero_bias(mut self) -> Self {
        self.bias.get_or_insert_with(|| Array1::zeros(self.weight.ncols()));
        if let Some(w2) = &self.hidden_weight {
            self.hidden_bias.get_or_insert_with(|| Array1::zeros(w2.ncols()));
        }
        self
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.hidden_weight.as_ref().unwrap_or(&self.weight).ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSpec {
    /// Linear map from final node features to class logits.
    pub head: Option<Array2<f64>>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    layers: Vec<LayerSpec>,
    readout: ReadoutSpec,
}

/// Which output the explanation is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Graph task: class index.
    Class(usize),
    /// Node task: explain class `class` of node `node`.
    NodeClass { node: usize, class: usize },
}

/// All intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// `H^(0) .. H^(L)`.
    pub hidden: Vec<Array2<f64>>,
    /// `Z^(l)` for each layer (input to the weight multiply).
    pub aggregated: Vec<Array2<f64>>,
    /// First MLP activation `relu(Z·W)` of GIN layers.
    pub mid: Vec<Option<Array2<f64>>>,
    /// Graph task: `1 x C`. Node task: `M x C`.
    pub logits: Array2<f64>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        self.hidden.last().expect("at least the input activations")
    }

    pub fn predicted_class(&self, row: usize) -> usize {
        argmax(self.logits.row(row).iter().copied())
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn add_bias(mut m: Array2<f64>, bias: Option<&Array1<f64>>) -> Array2<f64> {
    if let Some(b) = bias {
        m += b;
    }
    m
}

pub(crate) fn relu(m: Array2<f64>) -> Array2<f64> {
    m.mapv_into(|v| if v > 0.0 { v } else { 0.0 })
}

impl GnnModel {
    pub fn new(layers: Vec<LayerSpec>, readout: ReadoutSpec) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model", "at least one layer is required"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.as_ref().is_some_and(|b| b.len() != layer.weight.ncols()) {
                return Err(Error::Shape { layer: l, detail: "bias length differs from weight columns".into() });
            }
            match (&layer.hidden_weight, &layer.hidden_bias) {
                (Some(w2), Some(b2)) if b2.len() != w2.ncols() => {
                    return Err(Error::Shape { layer: l, detail: "second bias length differs from w2 columns".into() });
                }
                (None, Some(_)) => {
                    return Err(Error::Shape { layer: l, detail: "second bias without second weight".into() });
                }
                _ => {}
            }
            if let Some(w2) = &layer.hidden_weight {
                if w2.nrows() != layer.weight.ncols() {
                    return Err(Error::Shape {
                        layer: l,
                        detail: format!(
                            "second MLP weight expects {} inputs but first produces {}",
                            w2.nrows(),
                            layer.weight.ncols()
                        ),
                    });
                }
            }
            if l > 0 && layers[l - 1].out_dim() != layer.in_dim() {
                return Err(Error::Shape {
                    layer: l,
                    detail: format!(
                        "weight expects {} inputs but layer {} produces {}",
                        layer.in_dim(),
                        l - 1,
                        layers[l - 1].out_dim()
                    ),
                });
            }
        }
        let out = layers.last().map(LayerSpec::out_dim).unwrap_or(0);
        if let Some(head) = &readout.head {
            if head.nrows() != out {
                return Err(Error::Shape {
                    layer: layers.len(),
                    detail: format!("readout head expects {} features, final layer has {out}", head.nrows()),
                });
            }
        }
        Ok(Self { layers, readout })
    }

    /// Glorot-uniform initialised model. `dims` lists `N^(0) .. N^(L)`.
    pub fn random(arch: Arch, dims: &[usize], task: Task, head_classes: Option<usize>, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::param("dims", "need at least input and output width"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| match arch {
                Arch::Gcn => LayerSpec::gcn(glorot(w[0], w[1], &mut rng)),
                Arch::Gin => LayerSpec::gin(glorot(w[0], w[1], &mut rng), glorot(w[1], w[1], &mut rng)),
            })
            .collect();
        let head = head_classes.map(|c| glorot(*dims.last().unwrap(), c, &mut rng));
        Self::new(layers, ReadoutSpec { head, task })
    }

    /// Same model with zero biases on every layer.
    pub fn with_zero_bias(mut self) -> Self {
        self.layers = self.layers.into_iter().map(LayerSpec::with_zero_bias).collect();
        self
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn readout(&self) -> &ReadoutSpec {
        &self.readout
    }

    pub fn task(&self) -> Task {
        self.readout.task
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Feature widths `N^(0) .. N^(L)` at layer boundaries.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim()];
        w.extend(self.layers.iter().map(LayerSpec::out_dim));
        w
    }

    pub fn num_classes(&self) -> usize {
        match &self.readout.head {
            Some(h) => h.ncols(),
            None => self.layers.last().unwrap().out_dim(),
        }
    }

    /// Same model with `|W|` in the last layer, so every output unit starts
    /// active on nonnegative inputs.
    pub fn with_nonnegative_last_layer(mut self) -> Self {
        if let Some(last) = self.layers.last_mut() {
            last.weight.mapv_inplace(f64::abs);
            if let Some(w2) = last.hidden_weight.as_mut() {
                w2.mapv_inplace(f64::abs);
            }
        }
        self
    }

    /// Mutable parameters; callers must keep every shape unchanged.
    pub fn params_mut(&mut self) -> (&mut [LayerSpec], Option<&mut Array2<f64>>) {
        (&mut self.layers, self.readout.head.as_mut())
    }

    pub fn forward(&self, graph: &Graph) -> Result<ForwardPass> {
        if graph.feature_dim() != self.layers[0].in_dim() {
            return Err(Error::Shape {
                layer: 0,
                detail: format!(
                    "graph has {} input features, model expects {}",
                    graph.feature_dim(),
                    self.layers[0].in_dim()
                ),
            });
        }
        let mut hidden = vec![graph.features().clone()];
        let mut aggregated = Vec::with_capacity(self.depth());
        let mut mid = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let h = hidden.last().unwrap();
            let z = match layer.adjacency_mode {
                AdjacencyMode::UsesLambda => graph.adjacency().dot(h),
                AdjacencyMode::Identity => h.clone(),
            };
            let first = relu(add_bias(z.dot(&layer.weight), layer.bias.as_ref()));
            let (m, out) = match &layer.hidden_weight {
                Some(w2) => {
                    let out = relu(add_bias(first.dot(w2), layer.hidden_bias.as_ref()));
                    (Some(first), out)
                }
                None => (None, first),
            };
            aggregated.push(z);
            mid.push(m);
            hidden.push(out);
        }
        let logits = self.readout_logits(hidden.last().unwrap());
        Ok(ForwardPass { hidden, aggregated, mid, logits })
    }

    pub(crate) fn readout_logits(&self, last: &Array2<f64>) -> Array2<f64> {
        let base = match self.readout.task {
            Task::Graph => last.sum_axis(Axis(0)).insert_axis(Axis(0)),
            Task::Node => last.clone(),
        };
        match &self.readout.head {
            Some(head) => base.dot(head),
            None => base,
        }
    }

    /// Default explanation target: the predicted class.
    pub fn predicted_target(&self, pass: &ForwardPass, node: Option<usize>) -> Result<Target> {
        match (self.readout.task, node) {
            (Task::Graph, _) => Ok(Target::Class(pass.predicted_class(0))),
            (Task::Node, Some(node)) => {
                if node >= pass.logits.nrows() {
                    return Err(Error::param("target", format!("node {node} out of range")));
                }
                Ok(Target::NodeClass { node, class: pass.predicted_class(node) })
            }
            (Task::Node, None) => Err(Error::param("target", "node task requires a target node")),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = io::read_json(path)?;
        file.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &ModelFile::from(self))
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-a..a))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub layers: Vec<LayerFile>,
    pub readout: ReadoutFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub w: Vec<Vec<f64>>,
    #[serde(default)]
    pub w2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub adjacency_mode: AdjacencyMode,
}

fn default_mode() -> AdjacencyMode {
    AdjacencyMode::UsesLambda
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadoutFile {
    #[serde(default)]
    pub head: Option<Vec<Vec<f64>>>,
    pub task: Task,
}

impl ModelFile {
    pub fn into_model(self) -> Result<GnnModel> {
        let layers = self
            .layers
            .into_iter()
            .map(|l| {
                Ok(LayerSpec {
                    weight: matrix_from_rows(&l.w, "layer weight")?,
                    hidden_weight: l.w2.as_deref().map(|w| matrix_from_rows(w, "layer w2")).transpose()?,
                    bias: l.b.map(Array1::from),
                    hidden_bias: l.b2.map(Array1::from),
                    adjacency_mode: l.adjacency_mode,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = self.readout.head.as_deref().map(|h| matrix_from_rows(h, "readout head")).transpose()?;
        GnnModel::new(layers, ReadoutSpec { head, task: self.readout.task })
    }
}

impl From<&GnnModel> for ModelFile {
    fn from(m: &GnnModel) -> Self {
        ModelFile {
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: matrix_to_rows(&l.weight),
                    w2: l.hidden_weight.as_ref().map(matrix_to_rows),
                    b: l.bias.as_ref().map(|b| b.to_vec()),
                    b2: l.hidden_bias.as_ref().map(|b| b.to_vec()),
                    adjacency_mode: l.adjacency_mode,
                })
                .collect(),
            readout: ReadoutFile { head: m.readout.head.as_ref().map(matrix_to_rows), task: m.readout.task },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AdjacencyOptions;
    use ndarray::array;

    fn one_node(feature: f64) -> Graph {
        Graph::new(array![[1.0]], array![[feature]], None).unwrap()
    }

    fn scalar_model() -> GnnModel {
        GnnModel::new(vec![LayerSpec::gcn(array![[1.0]])], ReadoutSpec { head: None, task: Task::Graph }).unwrap()
    }

    #[test]
    fn identity_weight_passes_through() {
        let pass = scalar_model().forward(&one_node(2.0)).unwrap();
        assert_eq!(pass.hidden[1], array![[2.0]]);
        assert_eq!(pass.logits, array![[2.0]]);
    }

    #[test]
    fn relu_kills_negatives() {
        let pass = scalar_model().forward(&one_node(-3.0)).unwrap();
        assert_eq!(pass.hidden[1], array![[0.0]]);
    }

    /// Straight-line loops, independent of ndarray's matrix product.
    fn reference_logits(model: &GnnModel, g: &Graph) -> Vec<f64> {
        let m = g.num_nodes();
        let mut h: Vec<Vec<f64>> = g.features().rows().into_iter().map(|r| r.to_vec()).collect();
        for layer in model.layers() {
            let nin = h[0].len();
            let mut z = vec![vec![0.0; nin]; m];
            for i in 0..m {
                for j in 0..m {
                    for k in 0..nin {
                        z[i][k] += g.adjacency()[[i, j]] * h[j][k];
                    }
                }
            }
            let nout = layer.weight.ncols();
            let mut next = vec![vec![0.0; nout]; m];
            for i in 0..m {
                for o in 0..nout {
                    let mut s = 0.0;
                    for k in 0..nin {
                        s += z[i][k] * layer.weight[[k, o]];
                    }
                    next[i][o] = s.max(0.0);
                }
            }
            h = next;
        }
        let n = h[0].len();
        (0..n).map(|k| (0..m).map(|i| h[i][k]).sum()).collect()
    }

    #[test]
    fn forward_matches_loop_reference() {
        let model = GnnModel::random(Arch::Gcn, &[3, 4, 2], Task::Graph, None, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], feats, None, AdjacencyOptions::default())
            .unwrap();
        let pass = model.forward(&g).unwrap();
        let expect = reference_logits(&model, &g);
        for (a, b) in pass.logits.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_is_deterministic_and_nonnegative() {
        let model = GnnModel::random(Arch::Gin, &[2, 5, 5, 2], Task::Graph, None, 3).unwrap();
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], array![[1.0, -1.0], [0.5, 2.0], [0.0, 1.0], [3.0, 0.1]], None, AdjacencyOptions::default()).unwrap();
        let a = model.forward(&g).unwrap();
        let b = model.forward(&g).unwrap();
        assert_eq!(a, b);
        assert!(a.hidden[1..].iter().all(|h| h.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn aggregation_is_linear() {
        let model = GnnModel::random(Arch::Gcn, &[2, 3], Task::Graph, None, 1).unwrap();
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], array![[0.3, -1.0], [0.5, 0.25], [2.0, 1.0]], None, AdjacencyOptions::default()).unwrap();
        let doubled = g.clone().with_features(g.features() * 2.0).unwrap();
        let a = model.forward(&g).unwrap();
        let b = model.forward(&doubled).unwrap();
        assert_eq!(&a.aggregated[0] * 2.0, b.aggregated[0]);
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let err = GnnModel::new(
            vec![LayerSpec::gcn(Array2::zeros((1, 4))), LayerSpec::gcn(Array2::zeros((5, 2)))],
            ReadoutSpec { head: None, task: Task::Graph },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape { layer: 1, .. }), "{err}");
    }

    #[test]
    fn model_round_trips_bit_exact() {
        let model = GnnModel::random(Arch::Gin, &[1, 20, 20, 2], Task::Graph, None, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = GnnModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.depth(), 3);
        assert_eq!(back.widths(), vec![1, 20, 20, 2]);
    }

    #[test]
    fn biased_model_round_trips() {
        let mut model = GnnModel::random(Arch::Gin, &[2, 3, 2], Task::Node, Some(2), 4).unwrap().with_zero_bias();
        for layer in model.params_mut().0 {
            layer.bias.as_mut().unwrap().fill(0.25);
            layer.hidden_bias.as_mut().unwrap().fill(-0.5);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        assert_eq!(GnnModel::load(&path).unwrap(), model);
    }

    #[test]
    fn bias_is_added_before_relu() {
        let spec = LayerSpec { bias: Some(array![-1.5]), ..LayerSpec::gcn(array![[1.0]]) };
        let model = GnnModel::new(vec![spec], ReadoutSpec { head: None, task: Task::Graph }).unwrap();
        assert_eq!(model.forward(&one_node(2.0)).unwrap().logits[[0, 0]], 0.5);
        assert_eq!(model.forward(&one_node(1.0)).unwrap().logits[[0, 0]], 0.0);
        let bad = LayerSpec { bias: Some(array![1.0, 2.0]), ..LayerSpec::gcn(array![[1.0]]) };
        assert!(GnnModel::new(vec![bad], ReadoutSpec { head: None, task: Task::Graph }).is_err());
    }

    #[test]
    fn nonnegative_last_layer_only_touches_last() {
        let model = GnnModel::random(Arch::Gin, &[1, 4, 2], Task::Graph, None, 1).unwrap();
        let pos = model.clone().with_nonnegative_last_layer();
        assert_eq!(pos.layers()[0], model.layers()[0]);
        let last = &pos.layers()[1];
        assert!(last.weight.iter().chain(last.hidden_weight.as_ref().unwrap().iter()).all(|&v| v >= 0.0));
    }

    #[test]
    fn inconsistent_file_is_validation_error() {
        let text = r#"{"layers":[{"w":[[1,2,3,4],[1,2,3,4],[1,2,3,4]]},{"w":[[1],[1],[1],[1],[1]]}],
                       "readout":{"head":null,"task":"graph-classification"}}"#;
        let file: ModelFile = io::from_json_str(text, Path::new("m.json")).unwrap();
        assert!(matches!(file.into_model(), Err(Error::Shape { layer: 1, .. })));
    }
}
