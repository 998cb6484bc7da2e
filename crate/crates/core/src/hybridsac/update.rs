//! The four update rules, the temperature step and target smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::{AdamHyper, AdamState, ParameterSet, Tape, Tensor, Var};

use super::nets::{actor_on_tape, critic_on_tape, Batch, Networks};

/// `y = r + γ(1 − done)·Σ_k π_k(s')·(min_i Q̄_i(s', a^c')_k − α_c·log π(a^c'|s', k) − α_d·log π_k(s'))`.
///
/// The discrete expectation is exact; the continuous one uses the single
/// joint draw given by `next_noise`.
pub fn critic_target(
    nets: &Networks,
    actor: &ParameterSet,
    targets: [&ParameterSet; 2],
    batch: &Batch,
    next_noise: &Tensor,
    alpha_d: f64,
    alpha_c: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let av = tape.bind(actor, false);
    let obs = tape.constant(batch.next_obs.clone());
    let pass = actor_on_tape(&mut tape, &av, nets, obs, next_noise)?;
    let mut q = Vec::with_capacity(2);
    for t in targets {
        let tv = tape.bind(t, false);
        q.push(critic_on_tape(&mut tape, &tv, nets, obs, pass.unit_action)?);
    }
    let min_q = tape.min(q[0], q[1]);
    let mut soft = min_q;
    if let Some(clp) = pass.cond_log_prob {
        let c = tape.scale(clp, alpha_c);
        soft = tape.sub(soft, c);
    }
    if nets.has_discrete() {
        let d = tape.scale(pass.log_probs, alpha_d);
        soft = tape.sub(soft, d);
    }
    let weighted = tape.mul(pass.probs, soft);
    let value = tape.sum_rows(weighted);
    let v = tape.value(value).data();
    let y: Vec<f64> = (0..batch.len())
        .map(|i| {
            let cont = if batch.done[i] { 0.0 } else { 1.0 };
            batch.reward[i] + gamma * cont * v[i]
        })
        .collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("critic target is not finite".into()));
    }
    Ok(y)
}

/// Mean squared error between the taken action's value and `targets`.
/// Returns `(loss, q)` where `q` is the full `n×K` output node.
pub fn critic_loss_on_tape(
    tape: &mut Tape,
    critic: &ParameterSet,
    nets: &Networks,
    batch: &Batch,
    targets: &[f64],
) -> Result<(Var, Var, crate::numgrad::ParamVars)> {
    let vars = tape.bind(critic, true);
    let obs = tape.constant(batch.obs.clone());
    let act = batch.unit_action.as_ref().map(|a| tape.constant(a.clone()));
    let q = critic_on_tape(tape, &vars, nets, obs, act)?;
    let taken = tape.gather(q, batch.discrete.clone());
    let y = tape.constant(Tensor::column(targets));
    let diff = tape.sub(taken, y);
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    Ok((loss, q, vars))
}

/// One Adam step on each critic against the same targets; returns both losses.
pub fn critic_update(
    nets: &Networks,
    critics: &mut [ParameterSet; 2],
    opts: &mut [AdamState; 2],
    batch: &Batch,
    targets: &[f64],
) -> Result<[f64; 2]> {
    let mut losses = [0.0; 2];
    for i in 0..2 {
        let mut tape = Tape::new();
        let (loss, _, vars) = critic_loss_on_tape(&mut tape, &critics[i], nets, batch, targets)?;
        losses[i] = tape.value(loss).item();
        if !losses[i].is_finite() {
            return Err(Error::Training(format!("critic {} loss is not finite", i + 1)));
        }
        let grads = vars.collect(&tape, &tape.backward_scalar(loss));
        opts[i].step(&mut critics[i], &grads)?;
    }
    Ok(losses)
}

/// Scalars measured during an actor pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorStats {
    pub loss_d: f64,
    pub loss_c: f64,
    /// Batch mean of the exact discrete entropy.
    pub entropy_d: f64,
    /// Batch mean of `Σ_k π_k·(−log π(a^c|s, k))`.
    pub entropy_c: f64,
    /// Batch mean of `−log π(a^c|s, k)` for each `k`.
    pub cond_entropies: Vec<f64>,
}

/// Actor losses recorded on `tape`. Critic parameters enter as constants.
///
/// * discrete: `α_d·KL(π^d ‖ softmax(q/α_d))` with `q = min_i Q_i(s, a^c)`
///   detached;
/// * continuous: `Σ_k sg(π_k)·(α_c·log π(a^c|s, k) − q_k)`, reparameterized.
///
/// Both are batch means. The same draw of `a^c` feeds both.
pub fn actor_losses_on_tape(
    tape: &mut Tape,
    actor_vars: &crate::numgrad::ParamVars,
    critics: [&ParameterSet; 2],
    nets: &Networks,
    obs: &Tensor,
    noise: &Tensor,
    alpha_d: f64,
    alpha_c: f64,
) -> Result<(Option<Var>, Option<Var>, ActorStats)> {
    let x = tape.constant(obs.clone());
    let pass = actor_on_tape(tape, actor_vars, nets, x, noise)?;
    let mut q = Vec::with_capacity(2);
    for c in critics {
        let cv = tape.bind(c, false);
        q.push(critic_on_tape(tape, &cv, nets, x, pass.unit_action)?);
    }
    let min_q = tape.min(q[0], q[1]);
    let n = obs.rows();
    let k = nets.num_discrete();
    let mut stats = ActorStats::default();

    let lp = tape.value(pass.log_probs).clone();
    let p = tape.value(pass.probs).clone();
    stats.entropy_d = -(0..lp.len()).map(|i| p.data()[i] * lp.data()[i]).sum::<f64>() / n as f64;

    let loss_d = if nets.has_discrete() {
        let q_const = tape.detach(min_q);
        let tempered = tape.scale(q_const, 1.0 / alpha_d);
        let target_lp = tape.log_softmax_rows(tempered);
        let gap = tape.sub(pass.log_probs, target_lp);
        let kl = tape.mul(pass.probs, gap);
        let kl = tape.sum_rows(kl);
        let kl = tape.mean(kl);
        let loss = tape.scale(kl, alpha_d);
        stats.loss_d = tape.value(loss).item();
        Some(loss)
    } else {
        None
    };

    let loss_c = match pass.cond_log_prob {
        Some(clp) => {
            let clp_v = tape.value(clp).clone();
            stats.cond_entropies = (0..k)
                .map(|j| -(0..n).map(|i| clp_v.get(i, j)).sum::<f64>() / n as f64)
                .collect();
            stats.entropy_c = -(0..n)
                .map(|i| (0..k).map(|j| p.get(i, j) * clp_v.get(i, j)).sum::<f64>())
                .sum::<f64>()
                / n as f64;
            let weights = tape.detach(pass.probs);
            let ent = tape.scale(clp, alpha_c);
            let term = tape.sub(ent, min_q);
            let weighted = tape.mul(weights, term);
            let per_state = tape.sum_rows(weighted);
            let loss = tape.mean(per_state);
            stats.loss_c = tape.value(loss).item();
            Some(loss)
        }
        None => None,
    };
    if !(stats.loss_d.is_finite() && stats.loss_c.is_finite()) {
        return Err(Error::Training("actor loss is not finite".into()));
    }
    Ok((loss_d, loss_c, stats))
}

/// One Adam step on `L_d + L_c`. The two losses share only the trunk, and
/// their gradients there add, so a single step on the sum equals stepping on
/// their combined gradient.
pub fn actor_update(
    nets: &Networks,
    actor: &mut ParameterSet,
    opt: &mut AdamState,
    critics: [&ParameterSet; 2],
    obs: &Tensor,
    noise: &Tensor,
    alpha_d: f64,
    alpha_c: f64,
) -> Result<ActorStats> {
    let mut tape = Tape::new();
    let vars = tape.bind(actor, true);
    let (ld, lc, stats) = actor_losses_on_tape(&mut tape, &vars, critics, nets, obs, noise, alpha_d, alpha_c)?;
    let total = match (ld, lc) {
        (Some(a), Some(b)) => tape.add(a, b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Ok(stats),
    };
    let grads = vars.collect(&tape, &tape.backward_scalar(total));
    opt.step(actor, &grads)?;
    Ok(stats)
}

/// One temperature on a log scale with its own Adam state.
#[derive(Clone, Debug, PartialEq)]
pub struct Temperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub learn: bool,
    opt: AdamState,
    param: ParameterSet,
}

impl Temperature {
    pub fn new(initial: f64, target_entropy: f64, learn: bool, lr: f64) -> Result<Self> {
        if !(initial > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        let mut param = ParameterSet::new();
        param.insert("log_alpha", Tensor::scalar(initial.ln()))?;
        Ok(Self {
            log_alpha: initial.ln(),
            target_entropy,
            learn,
            opt: AdamState::new(&param, AdamHyper::with_lr(lr)),
            param,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Gradient of `J = α·(H − H_target)` with respect to `log α`.
    pub fn gradient(&self, entropy: f64) -> f64 {
        self.alpha() * (entropy - self.target_entropy)
    }

    /// One Adam step on `J`; a no-op when the temperature is fixed.
    pub fn update(&mut self, entropy: f64) -> Result<()> {
        if !self.learn {
            return Ok(());
        }
        let mut g = ParameterSet::new();
        g.insert("log_alpha", Tensor::scalar(self.gradient(entropy)))?;
        self.opt.step(&mut self.param, &g)?;
        self.log_alpha = self.param.get("log_alpha").expect("present").item();
        Ok(())
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.opt
    }

    pub fn restore(&mut self, log_alpha: f64, opt: AdamState) -> Result<()> {
        self.param.get_mut("log_alpha").expect("present").set(0, 0, log_alpha);
        self.log_alpha = log_alpha;
        if !opt.first_moment.is_congruent(&self.param) {
            return Err(Error::Shape("temperature optimizer state has the wrong shape".into()));
        }
        self.opt = opt;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureState {
    pub discrete: Temperature,
    pub continuous: Temperature,
}

/// `target ← (1 − τ)·target + τ·online`.
pub fn polyak_update(online: &ParameterSet, target: &mut ParameterSet, tau: f64) -> Result<()> {
    target.polyak_from(online, tau)
}
