use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::{ParamVars, Prng, Tape, Tensor, Var};

use super::policy::MatchPolicy;
use super::target::TemperedTarget;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `KL(π ‖ target)`, estimated from policy samples.
    ForwardKl,
    /// `KL(target ‖ π)`, estimated from target samples.
    ReverseKl,
    JensenShannon,
    /// `(1 − λ)·forward + λ·reverse` with `λ = t/T`.
    LinearSwitch,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [Self::ForwardKl, Self::ReverseKl, Self::JensenShannon, Self::LinearSwitch];

    pub fn name(self) -> &'static str {
        match self {
            Self::ForwardKl => "forward_kl",
            Self::ReverseKl => "reverse_kl",
            Self::JensenShannon => "jensen_shannon",
            Self::LinearSwitch => "linear_switch",
        }
    }

    fn needs_policy_samples(self) -> bool {
        !matches!(self, Self::ReverseKl)
    }

    fn needs_target_samples(self) -> bool {
        !matches!(self, Self::ForwardKl)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective `{s}`")))
    }
}

/// Random inputs of one estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    /// `n×d` standard normal noise for policy draws.
    pub noise: Option<Tensor>,
    /// `n×d` target draws and their normalized weights.
    pub target_points: Option<Tensor>,
    pub target_weights: Vec<f64>,
    pub ess: Option<f64>,
}

impl SampleBatch {
    pub fn draw(kind: ObjectiveKind, target: &TemperedTarget, n: usize, rng: &mut Prng) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("sample batch must be at least 1".into()));
        }
        let d = target.dim();
        let noise = kind
            .needs_policy_samples()
            .then(|| Tensor::new(n, d, rng.normals(n * d)));
        let (target_points, target_weights, ess) = if kind.needs_target_samples() {
            let s = target.samples(n, rng);
            (Some(Tensor::from_rows(&s.points)), s.weights, Some(s.ess))
        } else {
            (None, Vec::new(), None)
        };
        Ok(Self {
            noise,
            target_points,
            target_weights,
            ess,
        })
    }
}

/// A recorded objective with its value and standard error.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub loss: Var,
    pub value: f64,
    pub std_error: f64,
    pub ess: Option<f64>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn weighted_mean_and_se(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, w)| w * w * (v - mean).powi(2)).sum();
    (mean, var.sqrt())
}

fn target_log_unnormalized(target: &TemperedTarget, points: &Tensor) -> Vec<f64> {
    (0..points.rows()).map(|i| target.log_unnormalized(points.row_slice(i))).collect()
}

/// Forward KL with the normalizer dropped: `E_π[log π(a) − log p(a)/α]`.
fn forward(tape: &mut Tape, vars: &ParamVars, policy: &MatchPolicy, target: &TemperedTarget, noise: &Tensor) -> Result<(Var, Vec<f64>)> {
    let (a, lp) = policy.sample_on_tape(tape, vars, noise)?;
    // The target enters through the sample location, so its score is recorded
    // as a linear term in `a` whose slope is the exact gradient at `a`.
    let pts = tape.value(a).clone();
    let q = target_log_unnormalized(target, &pts);
    let slope = target_score(target, &pts);
    let slope = tape.constant(slope);
    let a_detached = tape.detach(a);
    let delta = tape.sub(a, a_detached);
    let lin = tape.mul(delta, slope);
    let lin = tape.sum_rows(lin);
    let q_const = tape.constant(Tensor::column(&q));
    let q_node = tape.add(q_const, lin);
    let term = tape.sub(lp, q_node);
    let per_sample = tape.value(term).data().to_vec();
    Ok((tape.mean(term), per_sample))
}

/// `∇_x log p(x)/α` for each row.
fn target_score(target: &TemperedTarget, pts: &Tensor) -> Tensor {
    let m = &target.mixture;
    let (n, d) = pts.shape();
    let mut out = Tensor::zeros(n, d);
    for i in 0..n {
        let x = pts.row_slice(i);
        let logs: Vec<f64> = (0..m.num_modes())
            .map(|k| {
                m.weights()[k].ln()
                    + m.means()[k]
                        .iter()
                        .zip(&m.stds()[k])
                        .zip(x)
                        .map(|((mu, s), v)| -0.5 * ((v - mu) / s).powi(2) - s.ln())
                        .sum::<f64>()
            })
            .collect();
        let norm = super::target::log_sum_exp(&logs);
        for k in 0..m.num_modes() {
            let r = (logs[k] - norm).exp();
            for j in 0..d {
                let s = m.stds()[k][j];
                let g = out.get(i, j) - r * (x[j] - m.means()[k][j]) / (s * s);
                out.set(i, j, g);
            }
        }
    }
    out.map(|g| g / target.alpha)
}

/// Reverse KL with the normalizer dropped: `E_target[log p(b)/α − log π(b)]`.
fn reverse(tape: &mut Tape, vars: &ParamVars, policy: &MatchPolicy, target: &TemperedTarget, points: &Tensor, weights: &[f64]) -> Result<(Var, f64, f64)> {
    let b = tape.constant(points.clone());
    let lp = policy.log_prob_on_tape(tape, vars, b)?;
    let q = tape.constant(Tensor::column(&target_log_unnormalized(target, points)));
    let term = tape.sub(q, lp);
    let w = tape.constant(Tensor::column(weights));
    let weighted = tape.mul(term, w);
    let loss = tape.sum(weighted);
    let (value, se) = weighted_mean_and_se(tape.value(term).data(), weights);
    Ok((loss, value, se))
}

/// `log m − log f` where `m = (π + p_α)/2`, from `log f` and `log g` (the other density).
fn log_mid_minus(tape: &mut Tape, log_f: Var, log_g: Var) -> Var {
    let gap = tape.sub(log_g, log_f);
    let sp = tape.softplus(gap);
    tape.shift(sp, -std::f64::consts::LN_2)
}

fn jensen_shannon(
    tape: &mut Tape,
    vars: &ParamVars,
    policy: &MatchPolicy,
    target: &TemperedTarget,
    noise: &Tensor,
    points: &Tensor,
    weights: &[f64],
) -> Result<(Var, f64, f64)> {
    let log_z = target
        .log_normalizer()
        .ok_or_else(|| Error::Config("Jensen-Shannon needs the tempered normalizer".into()))?;
    let (a, lp_a) = policy.sample_on_tape(tape, vars, noise)?;
    let pts = tape.value(a).clone();
    let q_a: Vec<f64> = target_log_unnormalized(target, &pts).iter().map(|q| q - log_z).collect();
    let slope = tape.constant(target_score(target, &pts));
    let a_detached = tape.detach(a);
    let delta = tape.sub(a, a_detached);
    let lin = tape.mul(delta, slope);
    let lin = tape.sum_rows(lin);
    let q_const = tape.constant(Tensor::column(&q_a));
    let lq_a = tape.add(q_const, lin);
    // ½·E_π[log π − log m] = ½·E_π[−(log m − log π)].
    let first = log_mid_minus(tape, lp_a, lq_a);
    let first = tape.neg(first);
    let first_vals = tape.value(first).data().to_vec();
    let first = tape.mean(first);

    let b = tape.constant(points.clone());
    let lp_b = policy.log_prob_on_tape(tape, vars, b)?;
    let q_b: Vec<f64> = target_log_unnormalized(target, points).iter().map(|q| q - log_z).collect();
    let lq_b = tape.constant(Tensor::column(&q_b));
    let second = log_mid_minus(tape, lq_b, lp_b);
    let second = tape.neg(second);
    let second_vals = tape.value(second).data().to_vec();
    let w = tape.constant(Tensor::column(weights));
    let second = tape.mul(second, w);
    let second = tape.sum(second);

    let total = tape.add(first, second);
    let loss = tape.scale(total, 0.5);
    let (m1, se1) = mean_and_se(&first_vals);
    let (m2, se2) = weighted_mean_and_se(&second_vals, weights);
    Ok((loss, 0.5 * (m1 + m2), 0.5 * (se1 * se1 + se2 * se2).sqrt()))
}

/// Records `kind` on `tape`. `progress ∈ [0, 1]` is the switch weight `λ`.
pub fn objective_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    policy: &MatchPolicy,
    target: &TemperedTarget,
    kind: ObjectiveKind,
    progress: f64,
    batch: &SampleBatch,
) -> Result<Estimate> {
    let noise = || {
        batch
            .noise
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{kind} needs policy noise")))
    };
    let points = || {
        batch
            .target_points
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{kind} needs target samples")))
    };
    let (loss, value, std_error) = match kind {
        ObjectiveKind::ForwardKl => {
            let (loss, per) = forward(tape, vars, policy, target, noise()?)?;
            let (v, se) = mean_and_se(&per);
            (loss, v, se)
        }
        ObjectiveKind::ReverseKl => reverse(tape, vars, policy, target, points()?, &batch.target_weights)?,
        ObjectiveKind::JensenShannon => {
            jensen_shannon(tape, vars, policy, target, noise()?, points()?, &batch.target_weights)?
        }
        ObjectiveKind::LinearSwitch => {
            if !(0.0..=1.0).contains(&progress) {
                return Err(Error::Contract(format!("switch weight {progress} is outside [0, 1]")));
            }
            let (fl, per) = forward(tape, vars, policy, target, noise()?)?;
            let (rl, rv, rse) = reverse(tape, vars, policy, target, points()?, &batch.target_weights)?;
            let (fv, fse) = mean_and_se(&per);
            let a = tape.scale(fl, 1.0 - progress);
            let b = tape.scale(rl, progress);
            let loss = tape.add(a, b);
            let se = ((1.0 - progress).powi(2) * fse * fse + progress.powi(2) * rse * rse).sqrt();
            (loss, (1.0 - progress) * fv + progress * rv, se)
        }
    };
    if !value.is_finite() {
        return Err(Error::Training(format!("{kind} estimate is not finite ({value})")));
    }
    Ok(Estimate {
        loss,
        value,
        std_error,
        ess: batch.ess,
    })
}

/// Value and standard error of `kind` for a fixed policy.
pub fn estimate_objective(
    policy: &MatchPolicy,
    target: &TemperedTarget,
    kind: ObjectiveKind,
    progress: f64,
    n: usize,
    rng: &mut Prng,
) -> Result<(f64, f64)> {
    let batch = SampleBatch::draw(kind, target, n, rng)?;
    let mut tape = Tape::new();
    let vars = tape.bind(&policy.params, false);
    let e = objective_on_tape(&mut tape, &vars, policy, target, kind, progress, &batch)?;
    Ok((e.value, e.std_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ObjectiveKind::ALL {
            assert_eq!(k.name().parse::<ObjectiveKind>().unwrap(), k);
        }
        assert!("kl".parse::<ObjectiveKind>().is_err());
    }

    #[test]
    fn batch_draws_only_what_the_objective_reads() {
        let t = TemperedTarget::new(super::super::GaussianMixture::two_mode(), 1.0).unwrap();
        let mut rng = Prng::seed(0);
        let f = SampleBatch::draw(ObjectiveKind::ForwardKl, &t, 4, &mut rng).unwrap();
        assert!(f.noise.is_some() && f.target_points.is_none());
        let r = SampleBatch::draw(ObjectiveKind::ReverseKl, &t, 4, &mut rng).unwrap();
        assert!(r.noise.is_none() && r.target_points.is_some());
        assert!(SampleBatch::draw(ObjectiveKind::ForwardKl, &t, 0, &mut rng).is_err());
    }
}
