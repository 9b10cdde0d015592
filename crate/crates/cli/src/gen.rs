use std::path::PathBuf;

use clap::Subcommand;

use relwalk::datasets::{gen_ba2motif, gen_infection, write_ba2motif_dir, write_infection_dir, InfectionConfig};

use crate::Globals;

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// BA trees with an attached house (class 0) or 5-cycle (class 1).
    Ba2motif {
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        base_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// SI spread on a random directed interaction graph.
    Infection {
        /// Number of scenarios; scenario `i` uses seed `seed * n + i`.
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 0.6)]
        lambda: f64,
        /// Fraction of initial carriers.
        #[arg(long, default_value_t = 0.02)]
        carriers: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(g: &Globals, kind: GenKind) -> anyhow::Result<()> {
    match kind {
        GenKind::Ba2motif { n, base_size, out } => {
            let samples = gen_ba2motif(n, base_size, g.seed)?;
            std::fs::create_dir_all(&out)?;
            write_ba2motif_dir(&out, &samples, g.seed, base_size)?;
            eprintln!("wrote {n} graphs to {}", out.display());
        }
        GenKind::Infection { n, nodes, steps, lambda, carriers, out } => {
            let config = InfectionConfig::new(nodes, steps, lambda, carriers);
            config.validate()?;
            let scenarios = (0..n as u64).map(|i| gen_infection(&config, g.seed * n as u64 + i)).collect::<Result<Vec<_>, _>>()?;
            std::fs::create_dir_all(&out)?;
            write_infection_dir(&out, &scenarios, g.seed)?;
            eprintln!("wrote {n} scenarios to {}", out.display());
        }
    }
    Ok(())
}
