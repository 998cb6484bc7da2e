//! Actor and critic networks recorded on a [`Tape`].
//!
//! The actor is a shared trunk followed by a logits head (when the action has
//! a discrete component) and one linear layer producing the mean and log
//! standard deviation of every continuous component. Each component owns an
//! optional stack of state-independent radial flows.
//!
//! A critic maps `concat(s, unit continuous action)` to one value per
//! discrete action.

use crate::error::{Error, Result};
use crate::numgrad::{init_params_with, mlp_on_tape, Activation, MlpConfig, ParamVars, ParameterSet, Prng, Tape, Tensor, Var};
use crate::policykit::{
    gaussian_log_density_on_tape, radial_flow_on_tape, tanh_squash_on_tape, ActionBounds, CategoricalHead,
    ContinuousBinding, ContinuousHead, FlowVars, GaussianHead, HybridActionSpec, HybridHeads, RadialFlowParams,
    LOG_STD_MAX, LOG_STD_MIN,
};

use super::buffer::Transition;
use super::config::TrainingConfig;

/// Shapes shared by the actor and both critics.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub obs_dim: usize,
    pub spec: HybridActionSpec,
    pub bounds: Vec<ActionBounds>,
    pub actor_hidden: Vec<usize>,
    pub activation: Activation,
    pub num_flows: usize,
    pub critic: MlpConfig,
}

impl Networks {
    pub fn new(obs_dim: usize, spec: HybridActionSpec, bounds: Vec<ActionBounds>, config: &TrainingConfig) -> Result<Self> {
        spec.validate()?;
        if spec.discrete.len() > 1 {
            return Err(Error::Config(
                "the trainer supports at most one discrete component; flatten several into one".into(),
            ));
        }
        if spec.discrete.is_empty() && spec.continuous.is_empty() {
            return Err(Error::Config("action space is empty".into()));
        }
        if bounds.len() != spec.continuous.len() || bounds.iter().zip(&spec.continuous).any(|(b, &m)| b.dim() != m) {
            return Err(Error::Config("one bounds entry per continuous component is required".into()));
        }
        if config.actor_hidden.is_empty() {
            return Err(Error::Config("the actor needs at least one hidden layer".into()));
        }
        let k = spec.discrete.first().copied().unwrap_or(1);
        let critic = MlpConfig::new(obs_dim + spec.total_continuous_dim(), &config.critic_hidden, k, config.activation);
        critic.validate()?;
        Ok(Self {
            obs_dim,
            spec,
            bounds,
            actor_hidden: config.actor_hidden.clone(),
            activation: config.activation,
            num_flows: config.num_flows,
            critic,
        })
    }

    pub fn has_discrete(&self) -> bool {
        !self.spec.discrete.is_empty()
    }

    pub fn has_continuous(&self) -> bool {
        !self.spec.continuous.is_empty()
    }

    /// Number of critic outputs; 1 when there is no discrete component.
    pub fn num_discrete(&self) -> usize {
        self.spec.discrete.first().copied().unwrap_or(1)
    }

    pub fn continuous_dim(&self) -> usize {
        self.spec.total_continuous_dim()
    }

    fn trunk(&self) -> MlpConfig {
        let (last, inner) = self.actor_hidden.split_last().expect("validated non-empty");
        MlpConfig::new(self.obs_dim, inner, *last, self.activation)
    }

    fn head(&self, out: usize) -> MlpConfig {
        MlpConfig::new(*self.actor_hidden.last().expect("validated non-empty"), &[], out, self.activation)
    }

    pub fn init_actor(&self, rng: &mut Prng) -> Result<ParameterSet> {
        let mut p = init_params_with(&self.trunk(), "trunk.", rng)?;
        if self.has_discrete() {
            p.absorb("", init_params_with(&self.head(self.num_discrete()), "logits.", rng)?)?;
        }
        if self.has_continuous() {
            p.absorb("", init_params_with(&self.head(2 * self.continuous_dim()), "cont.", rng)?)?;
        }
        for (j, &m) in self.spec.continuous.iter().enumerate() {
            for i in 0..self.num_flows {
                RadialFlowParams::init(m, rng).write_into(&mut p, &flow_prefix(j, i))?;
            }
        }
        Ok(p)
    }

    pub fn init_critic(&self, rng: &mut Prng) -> Result<ParameterSet> {
        init_params_with(&self.critic, "", rng)
    }

    /// Per-step log-Jacobian of the bounds map for component `j`.
    fn log_scale(&self, j: usize) -> f64 {
        self.bounds[j].log_scale()
    }
}

fn flow_prefix(component: usize, flow: usize) -> String {
    format!("c{component}.flow{flow}.")
}

/// Nodes of one actor pass over an `n`-row batch.
#[derive(Clone, Debug)]
pub struct ActorPass {
    /// `n×K` log-probabilities of the discrete choice (zeros when `D = 0`).
    pub log_probs: Var,
    /// `n×K` probabilities.
    pub probs: Var,
    /// `n×M` squashed continuous action in `(−1, 1)`, or `None` when `C = 0`.
    pub unit_action: Option<Var>,
    /// `n×K`: column `k` is `log π(a^c | s, a^d = k)` including the bounds map.
    pub cond_log_prob: Option<Var>,
}

/// Records the actor on the `n×obs_dim` node `obs`; `noise` is `n×M`
/// standard normal (ignored when there is no continuous component).
pub fn actor_on_tape(tape: &mut Tape, vars: &ParamVars, nets: &Networks, obs: Var, noise: &Tensor) -> Result<ActorPass> {
    let n = tape.value(obs).rows();
    let k = nets.num_discrete();
    let trunk = mlp_on_tape(tape, vars, &nets.trunk(), "trunk.", obs)?;
    let h = match nets.activation {
        Activation::Relu => tape.relu(trunk),
        Activation::Tanh => tape.tanh(trunk),
    };
    let (log_probs, probs) = if nets.has_discrete() {
        let logits = mlp_on_tape(tape, vars, &nets.head(k), "logits.", h)?;
        let lp = tape.log_softmax_rows(logits);
        let p = tape.exp(lp);
        (lp, p)
    } else {
        (tape.constant(Tensor::zeros(n, 1)), tape.constant(Tensor::full(n, 1, 1.0)))
    };
    if !nets.has_continuous() {
        return Ok(ActorPass {
            log_probs,
            probs,
            unit_action: None,
            cond_log_prob: None,
        });
    }
    let m = nets.continuous_dim();
    if noise.shape() != (n, m) {
        return Err(Error::Shape(format!("noise is {:?}, expected ({n}, {m})", noise.shape())));
    }
    let stats = mlp_on_tape(tape, vars, &nets.head(2 * m), "cont.", h)?;
    let eps_all = tape.constant(noise.clone());
    let mut actions = Vec::new();
    let mut log_ps = Vec::new();
    for (j, (&dim, off)) in nets.spec.continuous.iter().zip(nets.spec.continuous_offsets()).enumerate() {
        let mean = tape.slice_cols(stats, off, dim);
        let raw_log_std = tape.slice_cols(stats, m + off, dim);
        let log_std = tape.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
        let eps = tape.slice_cols(eps_all, off, dim);
        let std = tape.exp(log_std);
        let scaled = tape.mul(std, eps);
        let mut w = tape.add(mean, scaled);
        let mut lp = gaussian_log_density_on_tape(tape, eps, log_std);
        for i in 0..nets.num_flows {
            let fv = FlowVars::from_bound(vars, &flow_prefix(j, i));
            let (next, ld) = radial_flow_on_tape(tape, w, &fv);
            w = next;
            lp = tape.sub(lp, ld);
        }
        let (a, corr) = tanh_squash_on_tape(tape, w);
        lp = tape.sub(lp, corr);
        lp = tape.shift(lp, -nets.log_scale(j));
        actions.push(a);
        log_ps.push(lp);
    }
    let unit_action = if actions.len() == 1 { actions[0] } else { tape.concat_cols(&actions) };
    let cond_log_prob = match nets.spec.binding {
        ContinuousBinding::Independent => {
            let mut total = log_ps[0];
            for &lp in &log_ps[1..] {
                total = tape.add(total, lp);
            }
            let zeros = tape.constant(Tensor::zeros(n, k));
            tape.add(total, zeros)
        }
        ContinuousBinding::PerDiscreteAction => tape.concat_cols(&log_ps),
    };
    Ok(ActorPass {
        log_probs,
        probs,
        unit_action: Some(unit_action),
        cond_log_prob: Some(cond_log_prob),
    })
}

/// Records a critic on `obs` (and the unit continuous action, if any);
/// returns the `n×K` values.
pub fn critic_on_tape(tape: &mut Tape, vars: &ParamVars, nets: &Networks, obs: Var, unit_action: Option<Var>) -> Result<Var> {
    let input = match unit_action {
        Some(a) => tape.concat_cols(&[obs, a]),
        None => obs,
    };
    mlp_on_tape(tape, vars, &nets.critic, "", input)
}

/// Per-state policy heads read off the actor, for inspection and exact
/// log-probabilities via [`crate::policykit::hybrid_log_prob`].
pub fn policy_heads(nets: &Networks, actor: &ParameterSet, obs: &[f64]) -> Result<HybridHeads> {
    let mut tape = Tape::new();
    let vars = tape.bind(actor, false);
    let x = tape.constant(Tensor::row(obs));
    let trunk = mlp_on_tape(&mut tape, &vars, &nets.trunk(), "trunk.", x)?;
    let h = match nets.activation {
        Activation::Relu => tape.relu(trunk),
        Activation::Tanh => tape.tanh(trunk),
    };
    let mut discrete = Vec::new();
    if nets.has_discrete() {
        let logits = mlp_on_tape(&mut tape, &vars, &nets.head(nets.num_discrete()), "logits.", h)?;
        discrete.push(CategoricalHead::new(tape.value(logits).data().to_vec()));
    }
    let mut continuous = Vec::new();
    if nets.has_continuous() {
        let m = nets.continuous_dim();
        let stats = mlp_on_tape(&mut tape, &vars, &nets.head(2 * m), "cont.", h)?;
        let s = tape.value(stats).data();
        for (j, (&dim, off)) in nets.spec.continuous.iter().zip(nets.spec.continuous_offsets()).enumerate() {
            let gaussian = GaussianHead::new(s[off..off + dim].to_vec(), s[m + off..m + off + dim].to_vec());
            let flows = (0..nets.num_flows)
                .map(|i| {
                    RadialFlowParams::read_from(actor, &flow_prefix(j, i))
                        .ok_or_else(|| Error::Config(format!("actor is missing flow {i} of component {j}")))
                })
                .collect::<Result<Vec<_>>>()?;
            continuous.push(ContinuousHead {
                gaussian,
                flows,
                bounds: Some(nets.bounds[j].clone()),
            });
        }
    }
    Ok(HybridHeads { discrete, continuous })
}

/// A replay minibatch in network layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Tensor,
    /// Taken discrete action per row (0 when `D = 0`).
    pub discrete: Vec<usize>,
    /// `n×M` continuous actions mapped back into `(−1, 1)`.
    pub unit_action: Option<Tensor>,
    pub reward: Vec<f64>,
    pub next_obs: Tensor,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(nets: &Networks, items: &[&Transition]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let obs: Vec<&[f64]> = items.iter().map(|t| t.s.as_slice()).collect();
        let next: Vec<&[f64]> = items.iter().map(|t| t.s_next.as_slice()).collect();
        let unit_action = nets.has_continuous().then(|| {
            let rows: Vec<Vec<f64>> = items
                .iter()
                .map(|t| {
                    t.a.continuous
                        .iter()
                        .zip(&nets.bounds)
                        .flat_map(|(c, b)| b.to_unit(c))
                        .collect()
                })
                .collect();
            Tensor::from_rows(&rows)
        });
        Ok(Self {
            obs: Tensor::from_rows(&obs),
            discrete: items.iter().map(|t| t.a.discrete.first().copied().unwrap_or(0)).collect(),
            unit_action,
            reward: items.iter().map(|t| t.r).collect(),
            next_obs: Tensor::from_rows(&next),
            done: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}
