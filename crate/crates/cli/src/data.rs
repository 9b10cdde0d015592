//! Dataset directories, the train/test split and explanation targets.

use std::path::Path;

use anyhow::Context;

use relwalk::datasets::{load_graph_dir, load_infection_dir, InfectionScenario, Manifest, MANIFEST};
use relwalk::graph::{Graph, Label};
use relwalk::model::{GnnModel, Target, Task};

use crate::invalid;

pub enum Dataset {
    Motif { graphs: Vec<Graph>, base_size: usize },
    Infection { scenarios: Vec<InfectionScenario>, graphs: Vec<Graph> },
}

impl Dataset {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let manifest: Manifest = relwalk::io::read_json(&dir.join(MANIFEST))
            .with_context(|| format!("{} is not a dataset directory", dir.display()))?;
        match manifest.kind.as_str() {
            "ba2motif" => {
                let (manifest, graphs) = load_graph_dir(dir)?;
                let base_size = manifest.config["base_size"].as_u64().ok_or_else(|| invalid("manifest lacks base_size"))? as usize;
                Ok(Dataset::Motif { graphs, base_size })
            }
            "infection" => {
                let (_, scenarios) = load_infection_dir(dir)?;
                let graphs = scenarios.iter().map(InfectionScenario::graph).collect();
                Ok(Dataset::Infection { scenarios, graphs })
            }
            other => Err(invalid(format!("unknown dataset kind `{other}`"))),
        }
    }

    pub fn graphs(&self) -> &[Graph] {
        match self {
            Dataset::Motif { graphs, .. } | Dataset::Infection { graphs, .. } => graphs,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Dataset::Motif { .. } => Task::Graph,
            Dataset::Infection { .. } => Task::Node,
        }
    }

    /// Index of the first test sample. The default holds out a third of
    /// BA-2motif graphs and a fifth of infection scenarios.
    pub fn split(&self, n_test: Option<usize>) -> anyhow::Result<usize> {
        let n = self.graphs().len();
        let default = match self {
            Dataset::Motif { .. } => n / 3,
            Dataset::Infection { .. } => n / 5,
        };
        let n_test = n_test.unwrap_or(default.max(1));
        if n_test == 0 || n_test >= n {
            return Err(invalid(format!("--n-test {n_test} must be in 1..{n}")));
        }
        Ok(n - n_test)
    }

    /// Test-set predictions to explain: correctly classified BA-2motif
    /// graphs, and infected-predicted targets of recorded chains.
    pub fn cases(&self, model: &GnnModel, n_test: Option<usize>, limit: Option<usize>) -> anyhow::Result<Vec<Case>> {
        let start = self.split(n_test)?;
        if model.task() != self.task() {
            return Err(invalid("model task does not match the dataset"));
        }
        let mut out = Vec::new();
        for (i, g) in self.graphs().iter().enumerate().skip(start) {
            let pass = model.forward(g)?;
            match self {
                Dataset::Motif { .. } => {
                    let target = model.predicted_target(&pass, None)?;
                    if let (Target::Class(c), Some(Label::Class(l))) = (target, g.label()) {
                        if c == *l {
                            out.push(Case { sample: i, target, chain: None });
                        }
                    }
                }
                Dataset::Infection { scenarios, .. } => {
                    for chain in &scenarios[i].chains {
                        if pass.predicted_class(chain.target) == 1 {
                            let target = Target::NodeClass { node: chain.target, class: 1 };
                            out.push(Case { sample: i, target, chain: Some(chain.nodes.clone()) });
                        }
                    }
                }
            }
            if limit.is_some_and(|l| out.len() >= l) {
                out.truncate(limit.unwrap());
                break;
            }
        }
        Ok(out)
    }
}

pub struct Case {
    pub sample: usize,
    pub target: Target,
    pub chain: Option<Vec<usize>>,
}

impl Case {
    pub fn target_label(&self) -> String {
        match self.target {
            Target::Class(c) => format!("class{c}"),
            Target::NodeClass { node, .. } => node.to_string(),
        }
    }
}
