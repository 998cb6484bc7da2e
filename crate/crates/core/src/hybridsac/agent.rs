use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::numgrad::{AdamHyper, AdamState, Checkpoint, ParameterSet, Prng, Tape, Tensor};
use crate::policykit::HybridAction;

use super::buffer::{ReplayBuffer, Transition};
use super::config::TrainingConfig;
use super::nets::{actor_on_tape, Batch, Networks};
use super::update::{
    actor_update, critic_target, critic_update, polyak_update, ActorStats, Temperature, TemperatureState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    /// Most likely discrete action; continuous chain evaluated at zero noise.
    Deterministic,
}

/// Everything measured by one gradient update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor: ActorStats,
    pub alpha_d: f64,
    pub alpha_c: f64,
}

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub env_step: u64,
    pub reward: f64,
    /// Undiscounted return of the episode that just ended.
    pub episode_return: Option<f64>,
    pub updates: Vec<UpdateStats>,
}

/// Fresh noise for one update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateNoise {
    /// `n×M` noise for the next-state actions in the critic target.
    pub next: Tensor,
    /// `n×M` noise for the actor step.
    pub current: Tensor,
}

impl UpdateNoise {
    pub fn draw(n: usize, m: usize, rng: &mut Prng) -> Self {
        let next = Tensor::new(n, m, rng.normals(n * m));
        let current = Tensor::new(n, m, rng.normals(n * m));
        Self { next, current }
    }
}

/// Default discrete entropy target: `0.5·ln K`.
pub fn default_target_entropy_d(k: usize) -> f64 {
    0.5 * (k as f64).ln()
}

/// Default continuous entropy target: minus the dimension of the continuous
/// action that a single discrete choice controls.
pub fn default_target_entropy_c(spec: &crate::policykit::HybridActionSpec) -> f64 {
    use crate::policykit::ContinuousBinding;
    let dims = &spec.continuous;
    match spec.binding {
        ContinuousBinding::Independent => -(dims.iter().sum::<usize>() as f64),
        ContinuousBinding::PerDiscreteAction if dims.is_empty() => 0.0,
        ContinuousBinding::PerDiscreteAction => -(dims.iter().sum::<usize>() as f64) / dims.len() as f64,
    }
}

/// The Hybrid SAC agent with its replay buffer and training state.
#[derive(Clone, Debug)]
pub struct HybridSac {
    pub config: TrainingConfig,
    pub nets: Networks,
    pub actor: ParameterSet,
    pub critics: [ParameterSet; 2],
    pub critic_targets: [ParameterSet; 2],
    pub temps: TemperatureState,
    pub buffer: ReplayBuffer,
    actor_opt: AdamState,
    critic_opts: [AdamState; 2],
    act_rng: Prng,
    update_rng: Prng,
    env_rng: Prng,
    env_steps: u64,
    updates_done: u64,
    obs: Option<Vec<f64>>,
    episode_return: f64,
}

const STREAM_INIT: u64 = 1;
const STREAM_ACT: u64 = 2;
const STREAM_UPDATE: u64 = 3;
const STREAM_ENV: u64 = 4;
pub(crate) const STREAM_EVAL: u64 = 5;

impl HybridSac {
    pub fn new(env: &EnvSpec, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let nets = Networks::new(env.observation_dim, env.action.clone(), env.bounds.clone(), &config)?;
        let mut init = Prng::split(config.seed, STREAM_INIT);
        let actor = nets.init_actor(&mut init)?;
        let critics = [nets.init_critic(&mut init)?, nets.init_critic(&mut init)?];
        let critic_targets = critics.clone();
        let target_d = config
            .target_entropy_d
            .unwrap_or_else(|| default_target_entropy_d(nets.num_discrete()));
        let target_c = config
            .target_entropy_c
            .unwrap_or_else(|| default_target_entropy_c(&nets.spec));
        let temps = TemperatureState {
            discrete: Temperature::new(
                config.initial_alpha_d,
                target_d,
                config.auto_alpha && nets.has_discrete(),
                config.alpha_lr,
            )?,
            continuous: Temperature::new(
                config.initial_alpha_c,
                target_c,
                config.auto_alpha && nets.has_continuous(),
                config.alpha_lr,
            )?,
        };
        Ok(Self {
            actor_opt: AdamState::new(&actor, AdamHyper::with_lr(config.actor_lr)),
            critic_opts: [
                AdamState::new(&critics[0], AdamHyper::with_lr(config.critic_lr)),
                AdamState::new(&critics[1], AdamHyper::with_lr(config.critic_lr)),
            ],
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            act_rng: Prng::split(config.seed, STREAM_ACT),
            update_rng: Prng::split(config.seed, STREAM_UPDATE),
            env_rng: Prng::split(config.seed, STREAM_ENV),
            env_steps: 0,
            updates_done: 0,
            obs: None,
            episode_return: 0.0,
            nets,
            actor,
            critics,
            critic_targets,
            temps,
            config,
        })
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn alpha_d(&self) -> f64 {
        self.temps.discrete.alpha()
    }

    pub fn alpha_c(&self) -> f64 {
        self.temps.continuous.alpha()
    }

    pub fn act(&mut self, obs: &[f64], mode: ActMode) -> Result<HybridAction> {
        let mut rng = std::mem::replace(&mut self.act_rng, Prng::seed(0));
        let out = self.act_with(obs, mode, &mut rng);
        self.act_rng = rng;
        out
    }

    /// Acts with an explicit generator, leaving the agent's streams untouched.
    pub fn act_with(&self, obs: &[f64], mode: ActMode, rng: &mut Prng) -> Result<HybridAction> {
        if obs.len() != self.nets.obs_dim {
            return Err(Error::Shape(format!(
                "observation has {} entries, expected {}",
                obs.len(),
                self.nets.obs_dim
            )));
        }
        let m = self.nets.continuous_dim();
        let noise = match mode {
            ActMode::Stochastic => rng.normals(m),
            ActMode::Deterministic => vec![0.0; m],
        };
        let mut tape = Tape::new();
        let vars = tape.bind(&self.actor, false);
        let x = tape.constant(Tensor::row(obs));
        let pass = actor_on_tape(&mut tape, &vars, &self.nets, x, &Tensor::new(1, m, noise))?;
        let discrete = if self.nets.has_discrete() {
            let probs = tape.value(pass.probs).data();
            let choice = match mode {
                ActMode::Stochastic => rng.categorical(probs),
                ActMode::Deterministic => argmax(probs),
            };
            vec![choice]
        } else {
            Vec::new()
        };
        let continuous = match pass.unit_action {
            Some(a) => {
                let unit = tape.value(a).data();
                self.nets
                    .spec
                    .continuous
                    .iter()
                    .zip(self.nets.spec.continuous_offsets())
                    .zip(&self.nets.bounds)
                    .map(|((&dim, off), b)| b.to_env(&unit[off..off + dim]))
                    .collect()
            }
            None => Vec::new(),
        };
        Ok(HybridAction { discrete, continuous })
    }

    /// Uniform over the discrete choices and the continuous bounds.
    fn random_action(&mut self) -> HybridAction {
        let rng = &mut self.act_rng;
        HybridAction {
            discrete: self.nets.spec.discrete.iter().map(|&k| rng.below(k)).collect(),
            continuous: self
                .nets
                .bounds
                .iter()
                .map(|b| b.low.iter().zip(&b.high).map(|(&l, &h)| rng.uniform_in(l, h)).collect())
                .collect(),
        }
    }

    /// Updates owed after the current number of environment steps.
    fn updates_due(&self) -> u64 {
        if self.env_steps <= self.config.warmup_steps {
            return 0;
        }
        let since = (self.env_steps - self.config.warmup_steps) as f64;
        ((since * self.config.update_ratio).floor() as u64).saturating_sub(self.updates_done)
    }

    /// Collects one transition, then runs the updates the ratio calls for.
    pub fn train_step(&mut self, env: &mut dyn Environment) -> Result<StepRecord> {
        let obs = match self.obs.take() {
            Some(o) => o,
            None => {
                self.episode_return = 0.0;
                env.reset(&mut self.env_rng)
            }
        };
        let action = if self.env_steps < self.config.warmup_steps {
            self.random_action()
        } else {
            self.act(&obs, ActMode::Stochastic)?
        };
        let step = env.step(&action)?;
        self.env_steps += 1;
        self.episode_return += step.reward;
        self.buffer.push(Transition {
            s: obs,
            a: action,
            r: step.reward,
            s_next: step.observation.clone(),
            done: step.terminal(),
        })?;
        let episode_return = if step.done {
            Some(self.episode_return)
        } else {
            self.obs = Some(step.observation);
            None
        };
        let mut updates = Vec::new();
        for _ in 0..self.updates_due() {
            updates.push(self.update()?);
        }
        Ok(StepRecord {
            env_step: self.env_steps,
            reward: step.reward,
            episode_return,
            updates,
        })
    }

    /// Samples a batch and fresh noise, then applies [`Self::update_from`].
    pub fn update(&mut self) -> Result<UpdateStats> {
        let idx = self.buffer.sample_indices(self.config.batch_size, &mut self.update_rng);
        let items: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let batch = Batch::from_transitions(&self.nets, &items)?;
        let noise = UpdateNoise::draw(batch.len(), self.nets.continuous_dim(), &mut self.update_rng);
        self.update_from(&batch, &noise)
    }

    /// Critic step, actor step, temperature step, then target smoothing.
    pub fn update_from(&mut self, batch: &Batch, noise: &UpdateNoise) -> Result<UpdateStats> {
        let (alpha_d, alpha_c) = (self.alpha_d(), self.alpha_c());
        let y = critic_target(
            &self.nets,
            &self.actor,
            [&self.critic_targets[0], &self.critic_targets[1]],
            batch,
            &noise.next,
            alpha_d,
            alpha_c,
            self.config.gamma,
        )?;
        let [q1_loss, q2_loss] = critic_update(&self.nets, &mut self.critics, &mut self.critic_opts, batch, &y)?;
        let actor = actor_update(
            &self.nets,
            &mut self.actor,
            &mut self.actor_opt,
            [&self.critics[0], &self.critics[1]],
            &batch.obs,
            &noise.current,
            alpha_d,
            alpha_c,
        )?;
        self.temps.discrete.update(actor.entropy_d)?;
        self.temps.continuous.update(actor.entropy_c)?;
        for i in 0..2 {
            polyak_update(&self.critics[i], &mut self.critic_targets[i], self.config.tau)?;
        }
        self.updates_done += 1;
        Ok(UpdateStats {
            q1_loss,
            q2_loss,
            actor,
            alpha_d: self.alpha_d(),
            alpha_c: self.alpha_c(),
        })
    }

    /// Parameters and optimizer states; the replay buffer is not included.
    pub fn to_checkpoint(&self, config_text: &str) -> Result<Checkpoint> {
        let mut ck = Checkpoint {
            config_text: config_text.to_string(),
            ..Default::default()
        };
        ck.params.insert("actor".into(), self.actor.clone());
        for i in 0..2 {
            ck.params.insert(format!("critic{}", i + 1), self.critics[i].clone());
            ck.params
                .insert(format!("critic{}_target", i + 1), self.critic_targets[i].clone());
            ck.optimizers
                .insert(format!("critic{}", i + 1), self.critic_opts[i].clone());
        }
        ck.optimizers.insert("actor".into(), self.actor_opt.clone());
        let mut temps = ParameterSet::new();
        temps.insert("log_alpha_d", Tensor::scalar(self.temps.discrete.log_alpha))?;
        temps.insert("log_alpha_c", Tensor::scalar(self.temps.continuous.log_alpha))?;
        ck.params.insert("temperature".into(), temps);
        ck.optimizers
            .insert("alpha_d".into(), self.temps.discrete.optimizer().clone());
        ck.optimizers
            .insert("alpha_c".into(), self.temps.continuous.optimizer().clone());
        Ok(ck)
    }

    /// Rebuilds an agent for `env` and overwrites its state from `ck`.
    pub fn from_checkpoint(env: &EnvSpec, config: TrainingConfig, ck: &Checkpoint) -> Result<Self> {
        let mut agent = Self::new(env, config)?;
        let group = |name: &str| -> Result<ParameterSet> {
            ck.params
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(crate::CheckpointError::Malformed(format!("missing group `{name}`"))))
        };
        let opt = |name: &str| -> Result<AdamState> {
            ck.optimizers.get(name).cloned().ok_or_else(|| {
                Error::Checkpoint(crate::CheckpointError::Malformed(format!("missing optimizer `{name}`")))
            })
        };
        let congruent = |a: &ParameterSet, b: &ParameterSet, name: &str| {
            if a.is_congruent(b) {
                Ok(())
            } else {
                Err(Error::Shape(format!("checkpoint group `{name}` does not match the configured networks")))
            }
        };
        let actor = group("actor")?;
        congruent(&agent.actor, &actor, "actor")?;
        agent.actor = actor;
        agent.actor_opt = opt("actor")?;
        for i in 0..2 {
            let name = format!("critic{}", i + 1);
            let c = group(&name)?;
            congruent(&agent.critics[i], &c, &name)?;
            agent.critics[i] = c;
            let t = group(&format!("{name}_target"))?;
            congruent(&agent.critic_targets[i], &t, &name)?;
            agent.critic_targets[i] = t;
            agent.critic_opts[i] = opt(&name)?;
        }
        let temps = group("temperature")?;
        let read = |n: &str| {
            temps
                .get(n)
                .map(Tensor::item)
                .ok_or_else(|| Error::Shape(format!("checkpoint is missing `{n}`")))
        };
        agent.temps.discrete.restore(read("log_alpha_d")?, opt("alpha_d")?)?;
        agent.temps.continuous.restore(read("log_alpha_c")?, opt("alpha_c")?)?;
        Ok(agent)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Returns and summed info flags over evaluation episodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub info_totals: BTreeMap<String, f64>,
}

impl EvalSummary {
    pub fn mean(&self) -> f64 {
        if self.returns.is_empty() {
            return 0.0;
        }
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }
}

/// Runs `episodes` episodes with the deterministic policy.
pub fn evaluate(agent: &HybridSac, env: &mut dyn Environment, episodes: usize, rng: &mut Prng) -> Result<EvalSummary> {
    let mut summary = EvalSummary::default();
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut total = 0.0;
        loop {
            let a = agent.act_with(&obs, ActMode::Deterministic, rng)?;
            let step = env.step(&a)?;
            total += step.reward;
            for (k, v) in &step.info {
                *summary.info_totals.entry(k.clone()).or_insert(0.0) += v;
            }
            if step.done {
                break;
            }
            obs = step.observation;
        }
        summary.returns.push(total);
    }
    Ok(summary)
}
