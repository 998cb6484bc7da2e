//! Radial flows `f(z) = z + β(z − z₀)/(α + r)`, `r = ‖z − z₀‖`, with
//! `α = exp(x)` and `β = −α + exp(y)`. The parameterization keeps `β > −α`,
//! which makes every flow invertible.

use serde::{Deserialize, Serialize};

use crate::numgrad::{ParamVars, ParameterSet, Prng, Tape, Tensor, Var};

use super::gaussian::{squash, ActionBounds, GaussianHead, SquashedSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialFlowParams {
    pub z0: Vec<f64>,
    pub x: f64,
    pub y: f64,
}

impl RadialFlowParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            z0: vec![0.0; dim],
            x: 0.0,
            y: 0.0,
        }
    }

    /// Identity map (`x = y = 0`) with `z₀ ~ N(0, 0.01²)`.
    pub fn init(dim: usize, rng: &mut Prng) -> Self {
        Self {
            z0: (0..dim).map(|_| 0.01 * rng.normal()).collect(),
            x: 0.0,
            y: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    pub fn alpha(&self) -> f64 {
        self.x.exp()
    }

    pub fn beta(&self) -> f64 {
        -self.alpha() + self.y.exp()
    }

    /// Stores as `{prefix}z0` (`1×d`), `{prefix}x`, `{prefix}y` (`1×1`).
    pub fn write_into(&self, set: &mut ParameterSet, prefix: &str) -> crate::Result<()> {
        set.insert(format!("{prefix}z0"), Tensor::row(&self.z0))?;
        set.insert(format!("{prefix}x"), Tensor::scalar(self.x))?;
        set.insert(format!("{prefix}y"), Tensor::scalar(self.y))?;
        Ok(())
    }

    pub fn read_from(set: &ParameterSet, prefix: &str) -> Option<Self> {
        Some(Self {
            z0: set.get(&format!("{prefix}z0"))?.data().to_vec(),
            x: set.get(&format!("{prefix}x"))?.item(),
            y: set.get(&format!("{prefix}y"))?.item(),
        })
    }
}

/// Log-determinant of the Jacobian at a point at distance `r` from `z₀`.
fn log_det_at(alpha: f64, beta: f64, r: f64, dim: usize) -> f64 {
    let h = beta / (alpha + r);
    (1.0 + h * alpha / (alpha + r)).ln() + (dim as f64 - 1.0) * (1.0 + h).ln()
}

/// `(f(z), log|det ∂f/∂z|)`.
pub fn radial_flow_forward(params: &RadialFlowParams, z: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(z.len(), params.dim(), "flow dim differs from input dim");
    let (alpha, beta) = (params.alpha(), params.beta());
    let diff: Vec<f64> = z.iter().zip(&params.z0).map(|(a, b)| a - b).collect();
    let r = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let h = beta / (alpha + r);
    let out = z.iter().zip(&diff).map(|(z, d)| z + h * d).collect();
    (out, log_det_at(alpha, beta, r, z.len()))
}

/// Radius `r` of the preimage of a point at distance `rho` from `z₀`: the
/// positive root of `r² + (α + β − ρ)·r − ρα = 0`.
fn preimage_radius(alpha: f64, beta: f64, rho: f64) -> f64 {
    let b = alpha + beta - rho;
    let s = (b * b + 4.0 * rho * alpha).sqrt();
    if b >= 0.0 {
        2.0 * rho * alpha / (b + s)
    } else {
        0.5 * (s - b)
    }
}

/// `f⁻¹(v)` together with `log|det ∂f/∂z|` evaluated at the preimage.
pub fn radial_flow_inverse(params: &RadialFlowParams, v: &[f64]) -> (Vec<f64>, f64) {
    let (alpha, beta) = (params.alpha(), params.beta());
    let diff: Vec<f64> = v.iter().zip(&params.z0).map(|(a, b)| a - b).collect();
    let rho = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let r = preimage_radius(alpha, beta, rho);
    let factor = 1.0 + beta / (alpha + r);
    let z = params.z0.iter().zip(&diff).map(|(c, d)| c + d / factor).collect();
    (z, log_det_at(alpha, beta, r, v.len()))
}

/// Intermediate values of one pass through a flow chain.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrace {
    /// `w₀ … w_N`.
    pub stages: Vec<Vec<f64>>,
    /// `log|det ∂f_i/∂w_{i−1}|` for `i = 1..N`.
    pub log_dets: Vec<f64>,
}

impl FlowTrace {
    pub fn pre_squash(&self) -> &[f64] {
        self.stages.last().expect("trace has at least w0")
    }
}

/// `w₀ = μ + σε`, `w_i = f_i(w_{i−1})`, `a = tanh(w_N)` with
/// `log π = log q₀(w₀) − Σ log|det| − Σ log(1 − a²)`.
pub fn flow_stack_sample(
    head: &GaussianHead,
    flows: &[RadialFlowParams],
    noise: &[f64],
    bounds: Option<&ActionBounds>,
) -> (SquashedSample, FlowTrace) {
    let w0 = head.reparameterize(noise);
    let mut log_prob = head.log_density_from_noise(noise);
    let mut stages = vec![w0];
    let mut log_dets = Vec::with_capacity(flows.len());
    for f in flows {
        assert_eq!(f.dim(), head.dim(), "flow dim differs from head dim");
        let (next, ld) = radial_flow_forward(f, stages.last().unwrap());
        log_prob -= ld;
        log_dets.push(ld);
        stages.push(next);
    }
    let trace = FlowTrace { stages, log_dets };
    let sample = squash(trace.pre_squash().to_vec(), noise.to_vec(), log_prob, bounds);
    (sample, trace)
}

/// Log-density of the unsquashed chain output `w_N`.
pub fn flow_stack_log_density(head: &GaussianHead, flows: &[RadialFlowParams], w_n: &[f64]) -> f64 {
    let mut w = w_n.to_vec();
    let mut total_log_det = 0.0;
    for f in flows.iter().rev() {
        let (prev, ld) = radial_flow_inverse(f, &w);
        total_log_det += ld;
        w = prev;
    }
    head.log_density(&w) - total_log_det
}

/// Flow parameters bound on a tape.
#[derive(Clone, Copy, Debug)]
pub struct FlowVars {
    pub z0: Var,
    pub x: Var,
    pub y: Var,
}

impl FlowVars {
    pub fn from_bound(vars: &ParamVars, prefix: &str) -> Self {
        Self {
            z0: vars.get(&format!("{prefix}z0")),
            x: vars.get(&format!("{prefix}x")),
            y: vars.get(&format!("{prefix}y")),
        }
    }

    fn alpha_beta(&self, tape: &mut Tape) -> (Var, Var) {
        let alpha = tape.exp(self.x);
        let ey = tape.exp(self.y);
        let beta = tape.sub(ey, alpha);
        (alpha, beta)
    }
}

fn log_det_on_tape(tape: &mut Tape, alpha: Var, beta: Var, r: Var, dim: usize) -> Var {
    let ar = tape.add(alpha, r);
    let h = tape.div(beta, ar);
    let ratio = tape.div(alpha, ar);
    let t = tape.mul(h, ratio);
    let t = tape.shift(t, 1.0);
    let first = tape.log(t);
    if dim == 1 {
        return first;
    }
    let h1 = tape.shift(h, 1.0);
    let lh = tape.log(h1);
    let rest = tape.scale(lh, dim as f64 - 1.0);
    tape.add(first, rest)
}

/// Batched forward flow over an `n×d` node; returns `(f(z), log|det|)` with
/// the log-determinant as `n×1`.
pub fn radial_flow_on_tape(tape: &mut Tape, z: Var, flow: &FlowVars) -> (Var, Var) {
    let dim = tape.value(z).cols();
    let (alpha, beta) = flow.alpha_beta(tape);
    let diff = tape.sub(z, flow.z0);
    let r = tape.row_norm(diff);
    let ar = tape.add(alpha, r);
    let h = tape.div(beta, ar);
    let shift = tape.mul(diff, h);
    let out = tape.add(z, shift);
    let ld = log_det_on_tape(tape, alpha, beta, r, dim);
    (out, ld)
}

/// Batched inverse flow; returns `(f⁻¹(v), log|det|)` with the determinant
/// taken at the preimage, `n×1`.
pub fn radial_flow_inverse_on_tape(tape: &mut Tape, v: Var, flow: &FlowVars) -> (Var, Var) {
    let dim = tape.value(v).cols();
    let (alpha, beta) = flow.alpha_beta(tape);
    let diff = tape.sub(v, flow.z0);
    let rho = tape.row_norm(diff);
    // b = α + β − ρ, s = sqrt(b² + 4ρα); the root is picked per row in the
    // cancellation-free branch.
    let ab = tape.add(alpha, beta);
    let b = tape.sub(ab, rho);
    let b2 = tape.square(b);
    let ra = tape.mul(rho, alpha);
    let ra4 = tape.scale(ra, 4.0);
    let disc = tape.add(b2, ra4);
    let s = tape.sqrt(disc);
    let mask_data: Vec<f64> = tape.value(b).data().iter().map(|&x| if x >= 0.0 { 1.0 } else { 0.0 }).collect();
    let rows = mask_data.len();
    let mask = tape.constant(Tensor::new(rows, 1, mask_data.clone()));
    let inv_mask = tape.constant(Tensor::new(rows, 1, mask_data.iter().map(|m| 1.0 - m).collect()));
    // Unselected rows get a unit offset in the denominator so they stay finite.
    let bs = tape.add(b, s);
    let bs = tape.add(bs, inv_mask);
    let ra2 = tape.scale(ra, 2.0);
    let r_pos = tape.div(ra2, bs);
    let sb = tape.sub(s, b);
    let r_neg = tape.scale(sb, 0.5);
    let rp = tape.mul(r_pos, mask);
    let rn = tape.mul(r_neg, inv_mask);
    let r = tape.add(rp, rn);
    let ar = tape.add(alpha, r);
    let h = tape.div(beta, ar);
    let factor = tape.shift(h, 1.0);
    let scaled = tape.div(diff, factor);
    let z = tape.add(flow.z0, scaled);
    let ld = log_det_on_tape(tape, alpha, beta, r, dim);
    (z, ld)
}
