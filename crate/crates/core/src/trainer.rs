//! Full-batch gradient descent with softmax cross-entropy.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Label};
use crate::model::{AdjacencyMode, ForwardPass, GnnModel, Task};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `lr / (1 + epoch / epochs)`.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Plain gradient descent.
    #[default]
    Gd,
    /// Adam with `β = (0.9, 0.999)`, `ε = 1e-8`.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Rescale the full gradient to this L2 norm when it is larger.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn new(epochs: usize, base_lr: f64) -> Self {
        Self { epochs, base_lr, schedule: LrSchedule::Decay, seed: 0, max_grad_norm: None, optimizer: Optimizer::Gd }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::param("lr", format!("{} is not a positive number", self.base_lr)));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::param("max_grad_norm", format!("{c} is not a positive number")));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.base_lr,
            LrSchedule::Decay => self.base_lr / (1.0 + epoch as f64 / self.epochs as f64),
        }
    }
}

/// Gradient of one layer; entries are present iff the layer has the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Array2<f64>,
    pub hidden_weight: Option<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
    pub hidden_bias: Option<Array1<f64>>,
}

/// Gradients shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub head: Option<Array2<f64>>,
}

fn add_opt<D: ndarray::Dimension>(a: &mut Option<ndarray::Array<f64, D>>, b: &Option<ndarray::Array<f64, D>>) {
    if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
        *a += b;
    }
}

impl Gradients {
    fn zeros_like(model: &GnnModel) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weight: Array2::zeros(l.weight.dim()),
                    hidden_weight: l.hidden_weight.as_ref().map(|w| Array2::zeros(w.dim())),
                    bias: l.bias.as_ref().map(|b| Array1::zeros(b.len())),
                    hidden_bias: l.hidden_bias.as_ref().map(|b| Array1::zeros(b.len())),
                })
                .collect(),
            head: model.readout().head.as_ref().map(|h| Array2::zeros(h.dim())),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            add_opt(&mut a.hidden_weight, &b.hidden_weight);
            add_opt(&mut a.bias, &b.bias);
            add_opt(&mut a.hidden_bias, &b.hidden_bias);
        }
        add_opt(&mut self.head, &other.head);
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weight.as_slice().expect("standard layout"));
            if let Some(w) = &g.hidden_weight {
                out.push(w.as_slice().expect("standard layout"));
            }
            if let Some(b) = &g.bias {
                out.push(b.as_slice().expect("standard layout"));
            }
            if let Some(b) = &g.hidden_bias {
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        if let Some(h) = &self.head {
            out.push(h.as_slice().expect("standard layout"));
        }
        out
    }

    /// L2 norm over every entry.
    pub fn norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn softmax(row: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = row.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

fn cross_entropy(row: ndarray::ArrayView1<'_, f64>, class: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[class]
}

/// Class indices per logit row, taken from the graph's label.
fn targets(model: &GnnModel, graph: &Graph) -> Result<Vec<usize>> {
    let classes = model.num_classes();
    let out = match (model.task(), graph.label()) {
        (Task::Graph, Some(Label::Class(c))) => vec![*c],
        (Task::Node, Some(Label::Nodes(v))) if v.len() == graph.num_nodes() => v.iter().map(|&c| c as usize).collect(),
        (task, label) => return Err(Error::invalid("label", format!("{label:?} does not fit a {task:?} task"))),
    };
    if let Some(c) = out.iter().find(|&&c| c >= classes) {
        return Err(Error::invalid("label", format!("class {c} out of range for {classes} classes")));
    }
    Ok(out)
}

/// Mean cross-entropy of the graph's label(s).
pub fn loss(model: &GnnModel, graph: &Graph) -> Result<f64> {
    let labels = targets(model, graph)?;
    let pass = model.forward(graph)?;
    Ok(mean_loss(&pass, &labels))
}

fn mean_loss(pass: &ForwardPass, labels: &[usize]) -> f64 {
    let total: f64 = labels.iter().enumerate().map(|(i, &c)| cross_entropy(pass.logits.row(i), c)).sum();
    total / labels.len() as f64
}

/// Loss times `scale`, and its gradient with respect to every weight.
pub fn backward(model: &GnnModel, graph: &Graph, scale: f64) -> Result<(f64, Gradients)> {
    let labels = targets(model, graph)?;
    let pass = model.forward(graph)?;
    let count = labels.len() as f64;
    let loss = scale * mean_loss(&pass, &labels);

    // d loss / d logits.
    let mut dlogits = Array2::zeros(pass.logits.dim());
    for (i, &c) in labels.iter().enumerate() {
        let mut p = softmax(pass.logits.row(i));
        p[c] -= 1.0;
        dlogits.row_mut(i).assign(&(p * (scale / count)));
    }

    let mut grads = Gradients::zeros_like(model);
    let last = pass.output();
    let pooled = match model.task() {
        Task::Graph => last.sum_axis(Axis(0)).insert_axis(Axis(0)),
        Task::Node => last.clone(),
    };
    let dpooled = match &model.readout().head {
        Some(head) => {
            grads.head = Some(pooled.t().dot(&dlogits));
            dlogits.dot(&head.t())
        }
        None => dlogits,
    };
    let mut dh = match model.task() {
        Task::Graph => {
            let row = dpooled.row(0);
            Array2::from_shape_fn(last.dim(), |(_, k)| row[k])
        }
        Task::Node => dpooled,
    };

    for (l, layer) in model.layers().iter().enumerate().rev() {
        let out = &pass.hidden[l + 1];
        let mut dq = dh;
        dq.zip_mut_with(out, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let dp = match (&layer.hidden_weight, &pass.mid[l]) {
            (Some(w2), Some(mid)) => {
                let g = &mut grads.layers[l];
                g.hidden_weight = Some(mid.t().dot(&dq));
                if layer.hidden_bias.is_some() {
                    g.hidden_bias = Some(dq.sum_axis(Axis(0)));
                }
                let mut dmid = dq.dot(&w2.t());
                dmid.zip_mut_with(mid, |d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
                dmid
            }
            _ => dq,
        };
        let z = &pass.aggregated[l];
        grads.layers[l].weight = z.t().dot(&dp);
        if layer.bias.is_some() {
            grads.layers[l].bias = Some(dp.sum_axis(Axis(0)));
        }
        if l > 0 {
            let dz = dp.dot(&layer.weight.t());
            dh = match layer.adjacency_mode {
                AdjacencyMode::UsesLambda => graph.adjacency().t().dot(&dz),
                AdjacencyMode::Identity => dz,
            };
        } else {
            dh = Array2::zeros((0, 0));
        }
    }
    Ok((loss, grads))
}

/// Parameter slices in a fixed order shared with [`Gradients::slices`].
fn param_slices(model: &mut GnnModel) -> Vec<&mut [f64]> {
    let (layers, head) = model.params_mut();
    let mut out = Vec::new();
    for layer in layers {
        out.push(layer.weight.as_slice_mut().expect("standard layout"));
        if let Some(w) = layer.hidden_weight.as_mut() {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        if let Some(b) = layer.bias.as_mut() {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        if let Some(b) = layer.hidden_bias.as_mut() {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
    }
    if let Some(h) = head {
        out.push(h.as_slice_mut().expect("standard layout"));
    }
    out
}

/// Moment estimates for Adam, one buffer per parameter slice.
#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

fn apply(model: &mut GnnModel, grads: &Gradients, lr: f64, adam: Option<&mut AdamState>) {
    let g = grads.slices();
    let params = param_slices(model);
    match adam {
        None => {
            for (p, d) in params.into_iter().zip(g) {
                p.iter_mut().zip(d).for_each(|(p, d)| *p -= lr * d);
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            state.t += 1;
            let c1 = 1.0 - B1.powi(state.t);
            let c2 = 1.0 - B2.powi(state.t);
            for (((p, d), m), v) in params.into_iter().zip(g).zip(&mut state.m).zip(&mut state.v) {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * d[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * d[i] * d[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

/// Fraction of correctly classified graphs (graph task) or nodes (node task).
pub fn accuracy(model: &GnnModel, graphs: &[Graph]) -> Result<f64> {
    let parts = par::map(graphs.iter().collect(), |g| -> Result<(usize, usize)> {
        let labels = targets(model, g)?;
        let pass = model.forward(g)?;
        let hits = labels.iter().enumerate().filter(|(i, &c)| pass.predicted_class(*i) == c).count();
        Ok((hits, labels.len()))
    });
    let (mut hits, mut total) = (0, 0);
    for p in parts {
        let (h, t) = p?;
        hits += h;
        total += t;
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: GnnModel,
    pub history: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Trains on `train` for `config.epochs` full-batch steps. Accuracy is
/// recorded every `log_every` epochs (and at the last one).
pub fn train(model: GnnModel, train: &[Graph], test: &[Graph], config: &TrainConfig, log_every: usize) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("dataset", "training set is empty"));
    }
    let mut model = model;
    let mut history = Vec::new();
    let mut adam = match config.optimizer {
        Optimizer::Gd => None,
        Optimizer::Adam => {
            let zeros: Vec<Vec<f64>> = param_slices(&mut model).iter().map(|s| vec![0.0; s.len()]).collect();
            Some(AdamState { m: zeros.clone(), v: zeros, t: 0 })
        }
    };
    let weight = 1.0 / train.len() as f64;
    for epoch in 0..config.epochs {
        let parts = par::map(train.iter().collect(), |g| backward(&model, g, weight));
        let mut total = Gradients::zeros_like(&model);
        let mut loss = 0.0;
        for p in parts {
            let (l, g) = p?;
            loss += l;
            total.add_assign(&g);
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        let mut lr = config.lr_at(epoch);
        if let Some(c) = config.max_grad_norm {
            let norm = total.norm();
            if norm > c {
                lr *= c / norm;
            }
        }
        apply(&mut model, &total, lr, adam.as_mut());
        let last = epoch + 1 == config.epochs;
        if log_every > 0 && (epoch % log_every == 0 || last) {
            history.push(EpochStats { epoch, lr, loss, train_accuracy: accuracy(&model, train)? });
        }
    }
    let train_accuracy = accuracy(&model, train)?;
    let test_accuracy = if test.is_empty() { None } else { Some(accuracy(&model, test)?) };
    Ok(TrainReport { model, history, train_accuracy, test_accuracy })
}
