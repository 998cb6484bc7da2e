use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::{AdamHyper, AdamState, Prng, Tape};

use super::objective::{objective_on_tape, ObjectiveKind, SampleBatch};
use super::policy::MatchPolicy;
use super::target::{GaussianMixture, TemperedTarget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub steps: usize,
    pub alpha: f64,
    pub num_flows: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Squash samples into `(−s, s)`; forward KL only.
    pub squash: Option<f64>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            alpha: 1.0,
            num_flows: 0,
            batch_size: 256,
            seed: 0,
            objective: ObjectiveKind::ForwardKl,
            hidden: vec![256, 256],
            lr: 3e-4,
            squash: None,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.squash.is_some() && self.objective != ObjectiveKind::ForwardKl {
            return Err(Error::Config("squashed policies support forward_kl only".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub policy: MatchPolicy,
    /// Objective estimate at every step.
    pub losses: Vec<f64>,
    /// Smallest effective sample size seen, for objectives that reweight target draws.
    pub min_ess: Option<f64>,
}

/// Weight `λ = t/T` of the reverse term at step `t` of `total`.
pub fn switch_weight(t: usize, total: usize) -> f64 {
    (t as f64 / total as f64).min(1.0)
}

pub fn fit(mixture: &GaussianMixture, config: &MatchConfig) -> Result<FitResult> {
    config.validate()?;
    let target = TemperedTarget::new(mixture.clone(), config.alpha)?;
    let mut init_rng = Prng::split(config.seed, 1);
    let mut rng = Prng::split(config.seed, 2);
    let mut policy = MatchPolicy::new(mixture.dim(), &config.hidden, config.num_flows, config.squash, &mut init_rng)?;
    let mut opt = AdamState::new(&policy.params, AdamHyper::with_lr(config.lr));
    let mut losses = Vec::with_capacity(config.steps);
    let mut min_ess: Option<f64> = None;
    for t in 0..config.steps {
        let batch = SampleBatch::draw(config.objective, &target, config.batch_size, &mut rng)?;
        let mut tape = Tape::new();
        let vars = tape.bind(&policy.params, true);
        let progress = switch_weight(t, config.steps);
        let est = objective_on_tape(&mut tape, &vars, &policy, &target, config.objective, progress, &batch)
            .map_err(|e| Error::Training(format!("step {t}: {e}; last losses {:?}", tail(&losses))))?;
        losses.push(est.value);
        if let Some(e) = est.ess {
            min_ess = Some(min_ess.map_or(e, |m| m.min(e)));
        }
        let grads = vars.collect(&tape, &tape.backward_scalar(est.loss));
        if !grads.is_finite() {
            return Err(Error::Training(format!("step {t}: gradient is not finite; last losses {:?}", tail(&losses))));
        }
        opt.step(&mut policy.params, &grads)?;
    }
    Ok(FitResult { policy, losses, min_ess })
}

fn tail(losses: &[f64]) -> &[f64] {
    &losses[losses.len().saturating_sub(5)..]
}
