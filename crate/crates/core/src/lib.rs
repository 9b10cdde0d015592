//! Top-K relevant walk search for message-passing graph neural networks.
//!
//! Walk relevances come from LRP-γ relevance propagation through a GCN or
//! GIN. [`emp_neu`] finds the exact top-K neuron-level walks by max-product
//! message passing with search-space splitting; [`amp_ave`] finds node-level
//! walks approximately by averaging propagation-matrix columns. [`oracle`]
//! enumerates every walk and is the reference both are tested against.

pub mod amp_ave;
pub mod datasets;
pub mod desk;
pub mod emp_neu;
pub mod error;
pub mod graph;
pub mod io;
pub mod lrp;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod par;
pub mod search;
pub mod synth;
pub mod trainer;
pub mod walk;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
