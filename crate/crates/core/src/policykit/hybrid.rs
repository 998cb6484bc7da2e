//! Factored hybrid policies: `π(a|s) = Π_i π(a^d_i|s) · Π_j π(a^c_j|s, a^d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Prng;

use super::categorical::CategoricalHead;
use super::flow::{flow_stack_log_density, flow_stack_sample, FlowTrace, RadialFlowParams};
use super::gaussian::{log_one_minus_tanh_sq, ActionBounds, GaussianHead, SquashedSample};

/// How continuous components relate to the discrete choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousBinding {
    /// Every continuous component is used whatever the discrete choice.
    Independent,
    /// Component `k` parameterizes discrete action `k`; only it is used.
    PerDiscreteAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridActionSpec {
    /// Cardinalities `K_i`.
    pub discrete: Vec<usize>,
    /// Dimensions `m_j`.
    pub continuous: Vec<usize>,
    pub binding: ContinuousBinding,
}

impl HybridActionSpec {
    pub fn new(discrete: Vec<usize>, continuous: Vec<usize>, binding: ContinuousBinding) -> Result<Self> {
        let spec = Self {
            discrete,
            continuous,
            binding,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.discrete.iter().any(|&k| k == 0) {
            return Err(Error::Config("discrete cardinalities must be >= 1".into()));
        }
        if self.continuous.iter().any(|&m| m == 0) {
            return Err(Error::Config("continuous dimensions must be >= 1".into()));
        }
        if self.binding == ContinuousBinding::PerDiscreteAction
            && (self.discrete.len() != 1 || self.continuous.len() != self.discrete[0])
        {
            return Err(Error::Config(
                "per-discrete-action binding needs one discrete component with one continuous component per action".into(),
            ));
        }
        Ok(())
    }

    pub fn total_continuous_dim(&self) -> usize {
        self.continuous.iter().sum()
    }

    /// Column offset of each continuous component in the concatenated vector.
    pub fn continuous_offsets(&self) -> Vec<usize> {
        self.continuous
            .iter()
            .scan(0, |acc, &m| {
                let o = *acc;
                *acc += m;
                Some(o)
            })
            .collect()
    }

    /// Checks shape and range of an action.
    pub fn check(&self, action: &HybridAction) -> Result<()> {
        if action.discrete.len() != self.discrete.len() {
            return Err(Error::Contract(format!(
                "expected {} discrete components, got {}",
                self.discrete.len(),
                action.discrete.len()
            )));
        }
        for (i, (&a, &k)) in action.discrete.iter().zip(&self.discrete).enumerate() {
            if a >= k {
                return Err(Error::Contract(format!("discrete component {i} is {a}, must be < {k}")));
            }
        }
        if action.continuous.len() != self.continuous.len() {
            return Err(Error::Contract(format!(
                "expected {} continuous components, got {}",
                self.continuous.len(),
                action.continuous.len()
            )));
        }
        for (j, (c, &m)) in action.continuous.iter().zip(&self.continuous).enumerate() {
            if c.len() != m {
                return Err(Error::Contract(format!("continuous component {j} has dim {}, expected {m}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("continuous component {j} is not finite")));
            }
        }
        Ok(())
    }
}

/// A concrete action. Discrete choices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub discrete: Vec<usize>,
    pub continuous: Vec<Vec<f64>>,
}

impl HybridAction {
    pub fn flat_continuous(&self) -> Vec<f64> {
        self.continuous.iter().flatten().copied().collect()
    }
}

/// One continuous component: Gaussian base, optional radial flows, `tanh`
/// squashing and an optional affine map onto bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousHead {
    pub gaussian: GaussianHead,
    pub flows: Vec<RadialFlowParams>,
    pub bounds: Option<ActionBounds>,
}

impl ContinuousHead {
    pub fn gaussian(gaussian: GaussianHead) -> Self {
        Self {
            gaussian,
            flows: Vec::new(),
            bounds: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gaussian.dim()
    }

    pub fn sample(&self, noise: &[f64]) -> (SquashedSample, FlowTrace) {
        flow_stack_sample(&self.gaussian, &self.flows, noise, self.bounds.as_ref())
    }

    /// Chain evaluated at zero noise.
    pub fn mode(&self) -> Vec<f64> {
        self.sample(&vec![0.0; self.dim()]).0.action
    }

    /// Log-density of a (bounded, squashed) action.
    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        let unit = match &self.bounds {
            Some(b) => b.to_unit(action),
            None => action.to_vec(),
        };
        if unit.iter().any(|u| !(u.abs() < 1.0)) {
            return Err(Error::Contract(format!("action {action:?} lies outside the open action interval")));
        }
        let w: Vec<f64> = unit.iter().map(|u| u.atanh()).collect();
        let mut lp = flow_stack_log_density(&self.gaussian, &self.flows, &w);
        lp -= w.iter().map(|&x| log_one_minus_tanh_sq(x)).sum::<f64>();
        if let Some(b) = &self.bounds {
            lp -= b.log_scale();
        }
        Ok(lp)
    }

    /// Entropy of the unsquashed density: closed form without flows, a
    /// single-sample `−log π` estimate with flows.
    pub fn pre_squash_entropy(&self, rng: &mut Prng) -> f64 {
        if self.flows.is_empty() {
            return self.gaussian.entropy();
        }
        let noise = rng.normals(self.dim());
        let (_, trace) = self.sample(&noise);
        -(self.gaussian.log_density_from_noise(&noise) - trace.log_dets.iter().sum::<f64>())
    }
}

/// Per-state heads of a hybrid policy.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridHeads {
    pub discrete: Vec<CategoricalHead>,
    pub continuous: Vec<ContinuousHead>,
}

impl HybridHeads {
    fn conforms(&self, spec: &HybridActionSpec) -> Result<()> {
        let ks: Vec<usize> = self.discrete.iter().map(CategoricalHead::num_actions).collect();
        let ms: Vec<usize> = self.continuous.iter().map(ContinuousHead::dim).collect();
        if ks != spec.discrete || ms != spec.continuous {
            return Err(Error::Contract(format!(
                "heads ({ks:?}, {ms:?}) do not match spec ({:?}, {:?})",
                spec.discrete, spec.continuous
            )));
        }
        Ok(())
    }
}

/// `Σ_i log π(a^d_i|s) + Σ_j log π(a^c_j|s, a^d)`; with per-discrete-action
/// binding only the selected component's density enters.
pub fn hybrid_log_prob(spec: &HybridActionSpec, heads: &HybridHeads, action: &HybridAction) -> Result<f64> {
    spec.check(action)?;
    heads.conforms(spec)?;
    let mut lp: f64 = action
        .discrete
        .iter()
        .zip(&heads.discrete)
        .map(|(&a, h)| h.log_probs()[a])
        .sum();
    match spec.binding {
        ContinuousBinding::Independent => {
            for (c, h) in action.continuous.iter().zip(&heads.continuous) {
                lp += h.log_prob(c)?;
            }
        }
        ContinuousBinding::PerDiscreteAction => {
            let k = action.discrete[0];
            lp += heads.continuous[k].log_prob(&action.continuous[k])?;
        }
    }
    Ok(lp)
}

/// Conditional continuous entropies `H(π(a^c|s, a^d = k))` for every `k` of
/// the first discrete component (one entry when there is none).
pub fn conditional_continuous_entropies(spec: &HybridActionSpec, heads: &HybridHeads, rng: &mut Prng) -> Vec<f64> {
    match spec.binding {
        ContinuousBinding::Independent => {
            let total: f64 = heads.continuous.iter().map(|h| h.pre_squash_entropy(rng)).sum();
            let k = spec.discrete.first().copied().unwrap_or(1);
            vec![total; k]
        }
        ContinuousBinding::PerDiscreteAction => heads.continuous.iter().map(|h| h.pre_squash_entropy(rng)).collect(),
    }
}

/// `α_d·H(π(a^d|s)) + α_c·Σ_{a^d} π(a^d|s)·H(π(a^c|s, a^d))`.
///
/// Several discrete components contribute the factored sum `Σ_i H(π(a^d_i|s))`.
/// The continuous weights are the probabilities of the first discrete
/// component, which is exact under both bindings because continuous
/// components never depend on the other discrete components.
pub fn hybrid_entropy_bonus(
    spec: &HybridActionSpec,
    heads: &HybridHeads,
    alpha_d: f64,
    alpha_c: f64,
    rng: &mut Prng,
) -> Result<f64> {
    heads.conforms(spec)?;
    let discrete: f64 = heads.discrete.iter().map(CategoricalHead::entropy).sum();
    if spec.continuous.is_empty() {
        return Ok(alpha_d * discrete);
    }
    let cond = conditional_continuous_entropies(spec, heads, rng);
    let weights = heads.discrete.first().map_or_else(|| vec![1.0], CategoricalHead::probs);
    let continuous: f64 = weights.iter().zip(&cond).map(|(p, h)| p * h).sum();
    Ok(alpha_d * discrete + alpha_c * continuous)
}
