//! Policy distributions: squashed diagonal Gaussians, radial-flow stacks,
//! categorical heads and their factored hybrid composition.

mod categorical;
mod flow;
mod gaussian;
mod hybrid;

pub use categorical::{categorical_entropy, CategoricalHead};
pub use flow::{
    flow_stack_log_density, flow_stack_sample, radial_flow_forward, radial_flow_inverse, radial_flow_inverse_on_tape,
    radial_flow_on_tape, FlowTrace, FlowVars, RadialFlowParams,
};
pub use gaussian::{
    gaussian_log_density_on_tape, gaussian_sample, log_one_minus_tanh_sq, tanh_squash_on_tape, ActionBounds,
    GaussianHead, SquashedSample, HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN,
};
pub use hybrid::{
    conditional_continuous_entropies, hybrid_entropy_bonus, hybrid_log_prob, ContinuousBinding, ContinuousHead,
    HybridAction, HybridActionSpec, HybridHeads,
};

/// Entropy of a diagonal Gaussian head (unsquashed).
pub fn gaussian_entropy(head: &GaussianHead) -> f64 {
    head.entropy()
}
