use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use relwalk::amp_ave::amp_ave_topk;
use relwalk::datasets::InfectionScenario;
use relwalk::emp_neu::emp_neu_topk;
use relwalk::graph::Graph;
use relwalk::lrp::PropagationStack;
use relwalk::model::{GnnModel, Target};
use relwalk::oracle::{exhaustive_topk_neuron, exhaustive_topk_node};
use relwalk::search::SearchLimits;
use relwalk::walk::{Ranking, ScoredWalk};

use crate::{invalid, Globals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    EmpNeu,
    AmpAve,
    ExhaustiveNode,
    ExhaustiveNeuron,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Graph file.
    #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
    graph: Option<PathBuf>,
    /// Infection scenario file, used as the graph.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Node to explain (node-level models).
    #[arg(long)]
    node: Option<usize>,
    /// Class to explain; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, value_enum, default_value = "amp-ave")]
    method: Method,
    #[arg(long, default_value_t = 10)]
    topk: usize,
    /// Emit every extracted walk (the top-K̃ list by absolute relevance)
    /// instead of only the positive ones.
    #[arg(long)]
    report_abs: bool,
    /// Stop the search after this many extracted walks.
    #[arg(long)]
    max_extractions: Option<usize>,
}

fn target(model: &GnnModel, pass: &relwalk::model::ForwardPass, node: Option<usize>, class: Option<usize>) -> anyhow::Result<Target> {
    let predicted = model.predicted_target(pass, node)?;
    Ok(match (predicted, class) {
        (t, None) => t,
        (Target::Class(_), Some(c)) => Target::Class(c),
        (Target::NodeClass { node, .. }, Some(c)) => Target::NodeClass { node, class: c },
    })
}

pub fn run(g: &Globals, args: ExplainArgs) -> anyhow::Result<()> {
    if args.topk == 0 {
        return Err(invalid("--topk must be at least 1"));
    }
    let model = GnnModel::load(&args.model)?;
    let graph = match (&args.graph, &args.scenario) {
        (Some(p), _) => Graph::load(p)?,
        (None, Some(p)) => InfectionScenario::load(p)?.graph(),
        (None, None) => return Err(invalid("one of --graph or --scenario is required")),
    };
    let pass = model.forward(&graph)?;
    let target = target(&model, &pass, args.node, args.class)?;
    let stack = PropagationStack::build(&model, &graph, &pass, target, &g.propagation(model.depth())?)?;
    let limits = SearchLimits { max_extractions: args.max_extractions };

    let (walks, summary): (Vec<ScoredWalk>, serde_json::Value) = match args.method {
        Method::EmpNeu | Method::AmpAve => {
            let res = if args.method == Method::EmpNeu {
                emp_neu_topk(&stack, args.topk, limits)
            } else {
                amp_ave_topk(&stack, args.topk, limits)
            };
            let summary = json!({
                "k": res.k(),
                "k_tilde": res.k_tilde(),
                "negatives_skipped": res.negatives_skipped(),
                "subsets_created": res.subsets_created,
                "exhausted": res.exhausted,
            });
            (if args.report_abs { res.extracted } else { res.walks }, summary)
        }
        Method::ExhaustiveNode => {
            let w = exhaustive_topk_node(&stack, args.topk, Ranking::Signed, g.budget)?;
            (w, json!({ "k": args.topk }))
        }
        Method::ExhaustiveNeuron => {
            let ranking = if args.report_abs { Ranking::Absolute } else { Ranking::Signed };
            let w = exhaustive_topk_neuron(&stack, args.topk, ranking, g.budget)?;
            (w, json!({ "k": args.topk }))
        }
    };
    let mut out = std::io::stdout().lock();
    for w in &walks {
        writeln!(out, "{}", serde_json::to_string(w)?)?;
    }
    let target_json = match target {
        Target::Class(c) => json!({ "class": c }),
        Target::NodeClass { node, class } => json!({ "node": node, "class": class }),
    };
    writeln!(out, "{}", json!({ "summary": summary, "target": target_json }))?;
    Ok(())
}
