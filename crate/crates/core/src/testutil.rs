use crate::lrp::PropagationStack;
use crate::synth::InstanceSpec;

pub(crate) fn random_stack(seed: u64, num_nodes: usize, widths: &[usize], edge_prob: f64) -> PropagationStack {
    InstanceSpec::gcn(num_nodes, widths).edge_prob(edge_prob).build(seed).stack()
}
