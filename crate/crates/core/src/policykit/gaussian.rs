use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::numgrad::{Tape, Var};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `½·ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal normal `q₀` with clamped log standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl GaussianHead {
    /// Clamps `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean and log_std dims differ");
        let log_std = log_std.into_iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Self { mean, log_std }
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// `μ + σ·ε`.
    pub fn reparameterize(&self, noise: &[f64]) -> Vec<f64> {
        assert_eq!(noise.len(), self.dim(), "noise dim differs from head dim");
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, l), e)| m + l.exp() * e)
            .collect()
    }

    /// `log q₀(w)`.
    pub fn log_density(&self, w: &[f64]) -> f64 {
        let noise: Vec<f64> = w
            .iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((w, m), l)| (w - m) / l.exp())
            .collect();
        self.log_density_from_noise(&noise)
    }

    /// `log q₀(μ + σ·ε)` written in terms of `ε`.
    pub fn log_density_from_noise(&self, noise: &[f64]) -> f64 {
        noise
            .iter()
            .zip(&self.log_std)
            .map(|(e, l)| -0.5 * e * e - l - HALF_LN_2PI)
            .sum()
    }

    /// Differential entropy `Σ ½·ln(2πe·σ²)` of the unsquashed density.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| 0.5 * (2.0 * PI * std::f64::consts::E).ln() + l).sum()
    }
}

/// Affine map from `(−1, 1)` onto `[low, high]`, applied after `tanh`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), high.len());
        assert!(low.iter().zip(&high).all(|(l, h)| l < h), "bounds must satisfy low < high");
        Self { low, high }
    }

    pub fn symmetric(dim: usize) -> Self {
        Self::new(vec![-1.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h + l)).collect()
    }

    /// `Σ ln(half width)`, the constant log-Jacobian of the map.
    pub fn log_scale(&self) -> f64 {
        self.half_width().iter().map(|w| w.ln()).sum()
    }

    pub fn to_env(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.center().iter().zip(self.half_width()))
            .map(|(u, (c, w))| c + w * u)
            .collect()
    }

    pub fn to_unit(&self, env: &[f64]) -> Vec<f64> {
        env.iter()
            .zip(self.center().iter().zip(self.half_width()))
            .map(|(a, (c, w))| (a - c) / w)
            .collect()
    }
}

/// A reparameterized draw pushed through `tanh` and the bounds map.
#[derive(Clone, Debug, PartialEq)]
pub struct SquashedSample {
    pub noise: Vec<f64>,
    pub pre_squash: Vec<f64>,
    /// `tanh(pre_squash)`, inside `(−1, 1)`.
    pub unit_action: Vec<f64>,
    /// `unit_action` mapped onto the bounds (identical when unbounded).
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// `log(1 − tanh²(w))` as `2(ln 2 − w − softplus(−2w))`.
pub fn log_one_minus_tanh_sq(w: f64) -> f64 {
    2.0 * (LN_2 - w - crate::numgrad::softplus(-2.0 * w))
}

pub(crate) fn squash(
    pre_squash: Vec<f64>,
    noise: Vec<f64>,
    pre_log_prob: f64,
    bounds: Option<&ActionBounds>,
) -> SquashedSample {
    let unit_action: Vec<f64> = pre_squash.iter().map(|w| w.tanh()).collect();
    let mut log_prob = pre_log_prob - pre_squash.iter().map(|&w| log_one_minus_tanh_sq(w)).sum::<f64>();
    let action = match bounds {
        Some(b) => {
            log_prob -= b.log_scale();
            b.to_env(&unit_action)
        }
        None => unit_action.clone(),
    };
    SquashedSample {
        noise,
        pre_squash,
        unit_action,
        action,
        log_prob,
    }
}

/// `a = tanh(μ + σ·ε)` with its log-density under change of variables.
pub fn gaussian_sample(head: &GaussianHead, noise: &[f64], bounds: Option<&ActionBounds>) -> SquashedSample {
    let w = head.reparameterize(noise);
    squash(w, noise.to_vec(), head.log_density_from_noise(noise), bounds)
}

/// Batched `log q₀` from noise: `Σ_j (−½ε² − log σ − ½ln 2π)`, `n×1`.
pub fn gaussian_log_density_on_tape(tape: &mut Tape, noise: Var, log_std: Var) -> Var {
    let sq = tape.square(noise);
    let half = tape.scale(sq, -0.5);
    let t = tape.sub(half, log_std);
    let t = tape.shift(t, -HALF_LN_2PI);
    tape.sum_rows(t)
}

/// `(tanh(w), Σ_j log(1 − tanh²(w_j)))` for an `n×d` node.
pub fn tanh_squash_on_tape(tape: &mut Tape, w: Var) -> (Var, Var) {
    let a = tape.tanh(w);
    let corr = tape.log_one_minus_tanh_sq(w);
    let corr = tape.sum_rows(corr);
    (a, corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_origin() {
        let s = gaussian_sample(&GaussianHead::standard(1), &[0.0], None);
        assert_eq!(s.action, vec![0.0]);
        assert!((s.log_prob - -0.918_938_5).abs() < 1e-7);
        let s2 = gaussian_sample(&GaussianHead::standard(2), &[0.0, 0.0], None);
        assert!((s2.log_prob - -1.837_877_1).abs() < 1e-7);
    }

    #[test]
    fn log_std_is_clamped() {
        let h = GaussianHead::new(vec![0.0, 0.0], vec![-100.0, 50.0]);
        assert_eq!(h.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn entropy_closed_form() {
        assert!((GaussianHead::standard(1).entropy() - 1.418_938_5).abs() < 1e-7);
    }

    #[test]
    fn bounds_round_trip_and_log_scale() {
        let b = ActionBounds::new(vec![0.0, -2.0], vec![1.0, 2.0]);
        let u = [0.25, -0.5];
        let e = b.to_env(&u);
        assert_eq!(e, vec![0.625, -1.0]);
        let back = b.to_unit(&e);
        assert!((back[0] - 0.25).abs() < 1e-15 && (back[1] + 0.5).abs() < 1e-15);
        assert!((b.log_scale() - (0.5f64.ln() + 2.0f64.ln())).abs() < 1e-15);
    }
}
