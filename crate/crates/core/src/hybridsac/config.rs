use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Activation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small networks and buffers sized for the desk environments.
    #[default]
    Desk,
    /// The Roboschool hyperparameter table.
    Roboschool,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "roboschool" => Ok(Self::Roboschool),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk or roboschool)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub preset: Preset,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient updates per environment step.
    pub update_ratio: f64,
    pub total_steps: u64,
    /// Uniformly random steps collected before any update.
    pub warmup_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    /// Radial flows per continuous component.
    pub num_flows: usize,
    /// Learn both temperatures; when false they stay at their initial values.
    pub auto_alpha: bool,
    pub initial_alpha_d: f64,
    pub initial_alpha_c: f64,
    /// Defaults to `0.5·ln K`.
    pub target_entropy_d: Option<f64>,
    /// Defaults to minus the continuous dimension seen by each discrete action.
    pub target_entropy_c: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl TrainingConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                preset,
                gamma: 0.99,
                tau: 0.005,
                actor_lr: 3e-4,
                critic_lr: 3e-4,
                alpha_lr: 3e-3,
                batch_size: 256,
                buffer_capacity: 100_000,
                update_ratio: 0.1,
                total_steps: 100_000,
                warmup_steps: 1000,
                eval_interval: 5000,
                eval_episodes: 5,
                seed: 0,
                actor_hidden: vec![64, 64],
                critic_hidden: vec![64, 64],
                activation: Activation::Relu,
                num_flows: 0,
                auto_alpha: true,
                initial_alpha_d: 0.1,
                initial_alpha_c: 0.1,
                target_entropy_d: None,
                target_entropy_c: None,
            },
            Preset::Roboschool => Self {
                preset,
                gamma: 0.99,
                tau: 0.005,
                actor_lr: 3e-4,
                critic_lr: 3e-4,
                alpha_lr: 3e-4,
                batch_size: 1024,
                buffer_capacity: 1_000_000,
                update_ratio: 0.1,
                total_steps: 10_000_000,
                warmup_steps: 1000,
                eval_interval: 50_000,
                eval_episodes: 5,
                seed: 0,
                actor_hidden: vec![256, 256],
                critic_hidden: vec![256, 256],
                activation: Activation::Relu,
                num_flows: 3,
                auto_alpha: false,
                initial_alpha_d: 0.05,
                initial_alpha_c: 0.05,
                target_entropy_d: None,
                target_entropy_c: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.update_ratio > 0.0 && self.update_ratio.is_finite()) {
            return bad("update_ratio must be positive");
        }
        if [self.actor_lr, self.critic_lr, self.alpha_lr].iter().any(|lr| !(*lr > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(self.initial_alpha_d > 0.0 && self.initial_alpha_c > 0.0) {
            return bad("initial temperatures must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.eval_interval == 0 {
            return bad("batch_size, buffer_capacity and eval_interval must be positive");
        }
        if self.actor_hidden.is_empty() || self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("the actor needs at least one hidden layer and all layer sizes must be positive");
        }
        Ok(())
    }
}
