use std::path::PathBuf;

use clap::{Args, ValueEnum};

use relwalk::desk::Recipe;
use relwalk::graph::Label;
use relwalk::trainer::Optimizer;

use crate::data::Dataset;
use crate::{invalid, out_path, ArchArg, Globals};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Gd,
    Adam,
}

/// Unset options fall back to the desk recipe for the dataset kind.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    /// Number of message-passing layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Held-out samples at the end of the dataset.
    #[arg(long)]
    n_test: Option<usize>,
    /// Retry with fresh initialisations while test accuracy is below this.
    #[arg(long)]
    min_accuracy: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn num_classes(data: &Dataset) -> usize {
    let max = data
        .graphs()
        .iter()
        .filter_map(|g| match g.label()? {
            Label::Class(c) => Some(*c),
            Label::Nodes(v) => v.iter().max().map(|&c| c as usize),
        })
        .max()
        .unwrap_or(0);
    (max + 1).max(2)
}

pub fn run(g: &Globals, args: TrainArgs) -> anyhow::Result<()> {
    let data = Dataset::load(&args.data)?;
    let mut recipe = match data {
        Dataset::Motif { .. } => Recipe::ba2motif(),
        Dataset::Infection { .. } => Recipe::infection(),
    };
    if let Some(a) = args.arch {
        recipe.arch = a.into();
    }
    let layers = args.layers.unwrap_or(recipe.dims.len() - 1);
    let hidden = args.hidden.unwrap_or(recipe.dims[1]);
    if layers == 0 || hidden == 0 {
        return Err(invalid("--layers and --hidden must be at least 1"));
    }
    let in_dim = data.graphs()[0].feature_dim();
    recipe.dims = std::iter::once(in_dim).chain(std::iter::repeat(hidden).take(layers - 1)).chain([num_classes(&data)]).collect();
    recipe.epochs = args.epochs.unwrap_or(recipe.epochs);
    recipe.lr = args.lr.unwrap_or(recipe.lr);
    recipe.optimizer = match args.optimizer {
        Some(OptimizerArg::Gd) => Optimizer::Gd,
        Some(OptimizerArg::Adam) => Optimizer::Adam,
        None => recipe.optimizer,
    };
    recipe.min_accuracy = args.min_accuracy.unwrap_or(0.0);

    let split = data.split(args.n_test)?;
    let (train, test) = data.graphs().split_at(split);
    let (report, attempts) = recipe.fit(data.task(), train, test, g.seed)?;
    out_path(&args.out)?;
    report.model.save(&args.out)?;
    let summary = serde_json::json!({
        "train_accuracy": report.train_accuracy,
        "test_accuracy": report.test_accuracy,
        "final_loss": report.history.last().map(|h| h.loss),
        "attempts": attempts,
        "dims": recipe.dims,
        "out": args.out,
    });
    println!("{summary}");
    Ok(())
}
