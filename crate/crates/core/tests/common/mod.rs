//! Shared oracles for the integration tests.
#![allow(dead_code)]

use hybrid_sac::envs::EnvSpec;
use hybrid_sac::hybridsac::{Batch, HybridSac, TrainingConfig, Transition, UpdateNoise};
use hybrid_sac::numgrad::{AdamHyper, AdamState, ParameterSet, Prng, Tape, Tensor};
use hybrid_sac::policykit::{
    radial_flow_forward, ActionBounds, CategoricalHead, ContinuousBinding, ContinuousHead, GaussianHead, HybridAction,
    HybridActionSpec, HybridHeads, RadialFlowParams,
};

pub fn spec(discrete: Vec<usize>, continuous: Vec<usize>, binding: ContinuousBinding) -> EnvSpec {
    let bounds = continuous.iter().map(|&m| ActionBounds::symmetric(m)).collect();
    EnvSpec {
        name: "test".into(),
        observation_dim: 3,
        action: HybridActionSpec::new(discrete, continuous, binding).unwrap(),
        bounds,
        max_episode_steps: 10,
        reward_range: (-1.0, 1.0),
        observation_range: (-1.0, 1.0),
    }
}

pub fn random_flow(d: usize, rng: &mut Prng, spread: f64) -> RadialFlowParams {
    RadialFlowParams {
        z0: (0..d).map(|_| spread * rng.normal()).collect(),
        x: spread * rng.normal(),
        y: spread * rng.normal(),
    }
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unimplemented!(),
    }
}

pub fn numeric_log_det(f: &RadialFlowParams, z: &[f64], h: f64) -> f64 {
    let d = z.len();
    let mut jac = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut up = z.to_vec();
        up[j] += h;
        let mut down = z.to_vec();
        down[j] -= h;
        let (fu, _) = radial_flow_forward(f, &up);
        let (fd, _) = radial_flow_forward(f, &down);
        for i in 0..d {
            jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    det(&jac).abs().ln()
}

/// A 1-d Gaussian head under three radial flows.
pub fn three_flow_head(seed: u64) -> ContinuousHead {
    let mut rng = Prng::seed(seed);
    ContinuousHead {
        gaussian: GaussianHead::new(vec![0.3 * rng.normal()], vec![-0.5 + 0.3 * rng.normal()]),
        flows: (0..3).map(|_| random_flow(1, &mut rng, 0.5)).collect(),
        bounds: None,
    }
}

/// A one-choice-per-parameter policy with 1-d Gaussian parameters.
pub fn grid_heads(seed: u64) -> (HybridActionSpec, HybridHeads) {
    let mut rng = Prng::seed(seed);
    let k = 2 + rng.below(3);
    let spec = HybridActionSpec::new(vec![k], vec![1; k], ContinuousBinding::PerDiscreteAction).unwrap();
    let heads = HybridHeads {
        discrete: vec![CategoricalHead::new(rng.normals(k))],
        continuous: (0..k)
            .map(|_| ContinuousHead::gaussian(GaussianHead::new(vec![0.5 * rng.normal()], vec![rng.uniform_in(-1.0, 0.0)])))
            .collect(),
    };
    (spec, heads)
}

/// Standard continuous SAC written directly against the numerical core, for
/// comparison with the hybrid agent on a single forced discrete action.
mod reference {
    use super::*;
    use hybrid_sac::numgrad::{mlp_on_tape, Activation, MlpConfig, ParamVars, Var};
    use hybrid_sac::policykit::{gaussian_log_density_on_tape, tanh_squash_on_tape, LOG_STD_MAX, LOG_STD_MIN};

    pub struct Sac {
        pub actor: ParameterSet,
        pub critics: [ParameterSet; 2],
        pub targets: [ParameterSet; 2],
        pub log_alpha: f64,
        actor_opt: AdamState,
        critic_opts: [AdamState; 2],
        alpha_m: f64,
        alpha_v: f64,
        alpha_t: i32,
        trunk: MlpConfig,
        head: MlpConfig,
        critic: MlpConfig,
        target_entropy: f64,
        gamma: f64,
        tau: f64,
        alpha_lr: f64,
    }

    impl Sac {
        pub fn from(agent: &HybridSac) -> Self {
            let mut actor = ParameterSet::new();
            for (n, t) in agent.actor.iter() {
                if !n.starts_with("logits.") {
                    actor.insert(n, t.clone()).unwrap();
                }
            }
            let cfg = &agent.config;
            let m = agent.nets.continuous_dim();
            let h = *cfg.actor_hidden.last().unwrap();
            Self {
                actor_opt: AdamState::new(&actor, AdamHyper::with_lr(cfg.actor_lr)),
                critic_opts: [
                    AdamState::new(&agent.critics[0], AdamHyper::with_lr(cfg.critic_lr)),
                    AdamState::new(&agent.critics[1], AdamHyper::with_lr(cfg.critic_lr)),
                ],
                actor,
                critics: agent.critics.clone(),
                targets: agent.critic_targets.clone(),
                log_alpha: agent.temps.continuous.log_alpha,
                alpha_m: 0.0,
                alpha_v: 0.0,
                alpha_t: 0,
                trunk: MlpConfig::new(3, &cfg.actor_hidden[..cfg.actor_hidden.len() - 1], h, Activation::Relu),
                head: MlpConfig::new(h, &[], 2 * m, Activation::Relu),
                critic: agent.nets.critic.clone(),
                target_entropy: -(m as f64),
                gamma: cfg.gamma,
                tau: cfg.tau,
                alpha_lr: cfg.alpha_lr,
            }
        }

        /// `(action, log π)` for an `n×3` observation node.
        fn policy(&self, tape: &mut Tape, vars: &ParamVars, obs: Var, noise: &Tensor) -> (Var, Var) {
            let t = mlp_on_tape(tape, vars, &self.trunk, "trunk.", obs).unwrap();
            let h = tape.relu(t);
            let stats = mlp_on_tape(tape, vars, &self.head, "cont.", h).unwrap();
            let m = noise.cols();
            let mean = tape.slice_cols(stats, 0, m);
            let ls = tape.slice_cols(stats, m, m);
            let ls = tape.clamp(ls, LOG_STD_MIN, LOG_STD_MAX);
            let eps = tape.constant(noise.clone());
            let sd = tape.exp(ls);
            let s = tape.mul(sd, eps);
            let w = tape.add(mean, s);
            let lq = gaussian_log_density_on_tape(tape, eps, ls);
            let (a, corr) = tanh_squash_on_tape(tape, w);
            (a, tape.sub(lq, corr))
        }

        fn q(&self, tape: &mut Tape, params: &ParameterSet, trainable: bool, obs: Var, a: Var) -> (Var, ParamVars) {
            let v = tape.bind(params, trainable);
            let x = tape.concat_cols(&[obs, a]);
            (mlp_on_tape(tape, &v, &self.critic, "", x).unwrap(), v)
        }

        pub fn update(&mut self, batch: &Batch, next_noise: &Tensor, noise: &Tensor) {
            let alpha = self.log_alpha.exp();
            let mut tape = Tape::new();
            let av = tape.bind(&self.actor, false);
            let s2 = tape.constant(batch.next_obs.clone());
            let (a2, lp2) = self.policy(&mut tape, &av, s2, next_noise);
            let (q1, _) = self.q(&mut tape, &self.targets[0], false, s2, a2);
            let (q2, _) = self.q(&mut tape, &self.targets[1], false, s2, a2);
            let mq = tape.min(q1, q2);
            let ent = tape.scale(lp2, alpha);
            let v = tape.sub(mq, ent);
            let v = tape.value(v).data().to_vec();
            let y: Vec<f64> = (0..batch.len())
                .map(|i| batch.reward[i] + self.gamma * (if batch.done[i] { 0.0 } else { 1.0 }) * v[i])
                .collect();

            for i in 0..2 {
                let mut tape = Tape::new();
                let s = tape.constant(batch.obs.clone());
                let a = tape.constant(batch.unit_action.clone().unwrap());
                let (q, vars) = self.q(&mut tape, &self.critics[i], true, s, a);
                let t = tape.constant(Tensor::column(&y));
                let d = tape.sub(q, t);
                let d = tape.square(d);
                let loss = tape.mean(d);
                let g = vars.collect(&tape, &tape.backward_scalar(loss));
                self.critic_opts[i].step(&mut self.critics[i], &g).unwrap();
            }

            let mut tape = Tape::new();
            let av = tape.bind(&self.actor, true);
            let s = tape.constant(batch.obs.clone());
            let (a, lp) = self.policy(&mut tape, &av, s, noise);
            let (q1, _) = self.q(&mut tape, &self.critics[0], false, s, a);
            let (q2, _) = self.q(&mut tape, &self.critics[1], false, s, a);
            let mq = tape.min(q1, q2);
            let ent = tape.scale(lp, alpha);
            let l = tape.sub(ent, mq);
            let loss = tape.mean(l);
            let entropy = -tape.value(lp).sum() / batch.len() as f64;
            let g = av.collect(&tape, &tape.backward_scalar(loss));
            self.actor_opt.step(&mut self.actor, &g).unwrap();

            let g = alpha * (entropy - self.target_entropy);
            self.alpha_t += 1;
            self.alpha_m = 0.9 * self.alpha_m + 0.1 * g;
            self.alpha_v = 0.999 * self.alpha_v + 0.001 * g * g;
            let mh = self.alpha_m / (1.0 - 0.9f64.powi(self.alpha_t));
            let vh = self.alpha_v / (1.0 - 0.999f64.powi(self.alpha_t));
            self.log_alpha -= self.alpha_lr * mh / (vh.sqrt() + 1e-8);

            for i in 0..2 {
                self.targets[i].polyak_from(&self.critics[i], self.tau).unwrap();
            }
        }
    }
}

/// Largest elementwise relative difference between matching tensors.
pub fn max_rel_diff(a: &ParameterSet, b: &ParameterSet) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, t) in b.iter() {
        let u = a.get(name).unwrap();
        for (x, y) in u.data().iter().zip(t.data()) {
            let scale = x.abs().max(y.abs()).max(1e-300);
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

/// Runs a one-choice hybrid agent and the reference SAC side by side on the
/// same batches and noise; returns the largest relative parameter gap and
/// the agent.
pub fn reduction_gap(steps: usize) -> (f64, HybridSac) {
    let env = spec(vec![1], vec![2], ContinuousBinding::Independent);
    let cfg = TrainingConfig {
        actor_hidden: vec![16, 16],
        critic_hidden: vec![16, 16],
        batch_size: 32,
        alpha_lr: 1e-2,
        seed: 4,
        ..TrainingConfig::default()
    };
    let mut agent = HybridSac::new(&env, cfg).unwrap();
    let mut sac = reference::Sac::from(&agent);
    let mut rng = Prng::seed(77);
    let data: Vec<Transition> = (0..200)
        .map(|_| Transition {
            s: rng.normals(3),
            a: HybridAction {
                discrete: vec![0],
                continuous: vec![vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]],
            },
            r: rng.normal(),
            s_next: rng.normals(3),
            done: rng.uniform() < 0.1,
        })
        .collect();
    for _ in 0..steps {
        let items: Vec<&Transition> = (0..32).map(|_| &data[rng.below(data.len())]).collect();
        let batch = Batch::from_transitions(&agent.nets, &items).unwrap();
        let noise = UpdateNoise::draw(32, 2, &mut rng);
        agent.update_from(&batch, &noise).unwrap();
        sac.update(&batch, &noise.next, &noise.current);
    }
    let mut gap = max_rel_diff(&agent.actor, &sac.actor);
    for i in 0..2 {
        gap = gap.max(max_rel_diff(&agent.critics[i], &sac.critics[i]));
        gap = gap.max(max_rel_diff(&agent.critic_targets[i], &sac.targets[i]));
    }
    let (x, y) = (agent.temps.continuous.log_alpha, sac.log_alpha);
    gap = gap.max((x - y).abs() / y.abs());
    (gap, agent)
}
