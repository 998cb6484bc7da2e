use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::Result;
use crate::numgrad::Prng;

use super::agent::{evaluate, EvalSummary, HybridSac, UpdateStats, STREAM_EVAL};

/// One row per evaluation. Loss and entropy columns are means over the
/// updates since the previous row (zero if there were none); temperatures
/// are current values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episode_return_mean: f64,
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss_d: f64,
    pub actor_loss_c: f64,
    pub alpha_d: f64,
    pub alpha_c: f64,
    pub entropy_d: f64,
    pub entropy_c: f64,
    /// `H(π(a^c|s, a^d = k))` per discrete action.
    pub cond_entropy: Vec<f64>,
}

impl MetricsRow {
    pub fn header(num_discrete: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "step",
            "episode_return_mean",
            "q1_loss",
            "q2_loss",
            "actor_loss_d",
            "actor_loss_c",
            "alpha_d",
            "alpha_c",
            "entropy_d",
            "entropy_c",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..num_discrete).map(|k| format!("cond_entropy_{k}")));
        h
    }

    /// Values in header order, formatted with `{}` (shortest round-trip,
    /// period decimal separator).
    pub fn fields(&self) -> Vec<String> {
        let mut f = vec![self.step.to_string()];
        f.extend(
            [
                self.episode_return_mean,
                self.q1_loss,
                self.q2_loss,
                self.actor_loss_d,
                self.actor_loss_c,
                self.alpha_d,
                self.alpha_c,
                self.entropy_d,
                self.entropy_c,
            ]
            .iter()
            .chain(&self.cond_entropy)
            .map(|v| v.to_string()),
        );
        f
    }

    pub fn is_finite(&self) -> bool {
        [
            self.episode_return_mean,
            self.q1_loss,
            self.q2_loss,
            self.actor_loss_d,
            self.actor_loss_c,
            self.alpha_d,
            self.alpha_c,
            self.entropy_d,
            self.entropy_c,
        ]
        .iter()
        .chain(&self.cond_entropy)
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default)]
struct Accumulator {
    count: usize,
    sum: UpdateStats,
    cond: Vec<f64>,
}

impl Accumulator {
    fn add(&mut self, u: &UpdateStats) {
        self.count += 1;
        self.sum.q1_loss += u.q1_loss;
        self.sum.q2_loss += u.q2_loss;
        self.sum.actor.loss_d += u.actor.loss_d;
        self.sum.actor.loss_c += u.actor.loss_c;
        self.sum.actor.entropy_d += u.actor.entropy_d;
        self.sum.actor.entropy_c += u.actor.entropy_c;
        if self.cond.len() < u.actor.cond_entropies.len() {
            self.cond.resize(u.actor.cond_entropies.len(), 0.0);
        }
        for (c, v) in self.cond.iter_mut().zip(&u.actor.cond_entropies) {
            *c += v;
        }
    }

    fn row(&self, step: u64, ret: f64, agent: &HybridSac) -> MetricsRow {
        let n = self.count.max(1) as f64;
        let k = if agent.nets.has_continuous() { agent.nets.num_discrete() } else { 0 };
        let mut cond: Vec<f64> = self.cond.iter().map(|c| c / n).collect();
        cond.resize(k, 0.0);
        MetricsRow {
            step,
            episode_return_mean: ret,
            q1_loss: self.sum.q1_loss / n,
            q2_loss: self.sum.q2_loss / n,
            actor_loss_d: self.sum.actor.loss_d / n,
            actor_loss_c: self.sum.actor.loss_c / n,
            alpha_d: agent.alpha_d(),
            alpha_c: agent.alpha_c(),
            entropy_d: self.sum.actor.entropy_d / n,
            entropy_c: self.sum.actor.entropy_c / n,
            cond_entropy: cond,
        }
    }
}

/// Output of [`train`].
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub rows: Vec<MetricsRow>,
    /// Evaluation behind the last row.
    pub last_eval: EvalSummary,
    /// Returns of completed training episodes.
    pub train_returns: Vec<f64>,
}

/// Trains for `config.total_steps` steps, evaluating every `eval_interval`
/// steps on `eval_env`. `on_eval` sees each new row and may stop training
/// early by returning `false`.
pub fn train(
    agent: &mut HybridSac,
    env: &mut dyn Environment,
    eval_env: &mut dyn Environment,
    mut on_eval: impl FnMut(&MetricsRow, &EvalSummary) -> bool,
) -> Result<TrainReport> {
    let mut report = TrainReport::default();
    let mut acc = Accumulator::default();
    let mut eval_rng = Prng::split(agent.config.seed, STREAM_EVAL);
    while agent.env_steps() < agent.config.total_steps {
        let rec = agent.train_step(env)?;
        for u in &rec.updates {
            acc.add(u);
        }
        if let Some(r) = rec.episode_return {
            report.train_returns.push(r);
        }
        if rec.env_step % agent.config.eval_interval == 0 {
            let summary = evaluate(agent, eval_env, agent.config.eval_episodes, &mut eval_rng)?;
            let row = acc.row(rec.env_step, summary.mean(), agent);
            acc = Accumulator::default();
            let go_on = on_eval(&row, &summary);
            report.rows.push(row);
            report.last_eval = summary;
            if !go_on {
                break;
            }
        }
    }
    Ok(report)
}
