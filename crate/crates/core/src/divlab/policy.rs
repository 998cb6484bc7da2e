use crate::error::{Error, Result};
use crate::numgrad::{init_params_with, mlp_on_tape, Activation, MlpConfig, ParamVars, ParameterSet, Prng, Tape, Tensor, Var};
use crate::policykit::{
    gaussian_log_density_on_tape, radial_flow_inverse_on_tape, radial_flow_on_tape, tanh_squash_on_tape, FlowVars,
    RadialFlowParams, HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN,
};

/// Seed of the fixed state the policy network is evaluated at.
pub const FIXED_STATE_SEED: u64 = 0x5EED;
pub const FIXED_STATE_DIM: usize = 8;

/// The fixed network input, drawn once from `N(0, I)`.
pub fn fixed_state() -> Vec<f64> {
    Prng::seed(FIXED_STATE_SEED).normals(FIXED_STATE_DIM)
}

fn flow_prefix(i: usize) -> String {
    format!("flow{i}.")
}

/// Gaussian policy on a fixed state, optionally followed by radial flows and
/// an optional `scale·tanh` squash.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchPolicy {
    pub params: ParameterSet,
    pub net: MlpConfig,
    pub dim: usize,
    pub num_flows: usize,
    pub squash: Option<f64>,
    pub state: Vec<f64>,
}

impl MatchPolicy {
    pub fn new(dim: usize, hidden: &[usize], num_flows: usize, squash: Option<f64>, rng: &mut Prng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("policy dimension must be positive".into()));
        }
        if squash.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("squash scale must be positive".into()));
        }
        let state = fixed_state();
        let net = MlpConfig::new(state.len(), hidden, 2 * dim, Activation::Relu);
        let mut params = init_params_with(&net, "net.", rng)?;
        for i in 0..num_flows {
            RadialFlowParams::init(dim, rng).write_into(&mut params, &flow_prefix(i))?;
        }
        Ok(Self {
            params,
            net,
            dim,
            num_flows,
            squash,
            state,
        })
    }

    /// `(mean, log_std)`, each `1×d`.
    pub fn stats_on_tape(&self, tape: &mut Tape, vars: &ParamVars) -> Result<(Var, Var)> {
        let s = tape.constant(Tensor::row(&self.state));
        let out = mlp_on_tape(tape, vars, &self.net, "net.", s)?;
        let mean = tape.slice_cols(out, 0, self.dim);
        let raw = tape.slice_cols(out, self.dim, self.dim);
        Ok((mean, tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX)))
    }

    /// Reparameterized draws from `n×d` standard normal `noise`; returns the
    /// samples and their `n×1` log-densities.
    pub fn sample_on_tape(&self, tape: &mut Tape, vars: &ParamVars, noise: &Tensor) -> Result<(Var, Var)> {
        if noise.cols() != self.dim {
            return Err(Error::Shape(format!("noise has {} columns, policy has {}", noise.cols(), self.dim)));
        }
        let (mean, log_std) = self.stats_on_tape(tape, vars)?;
        let eps = tape.constant(noise.clone());
        let std = tape.exp(log_std);
        let scaled = tape.mul(eps, std);
        let mut w = tape.add(scaled, mean);
        let mut lp = gaussian_log_density_on_tape(tape, eps, log_std);
        for i in 0..self.num_flows {
            let fv = FlowVars::from_bound(vars, &flow_prefix(i));
            let (next, ld) = radial_flow_on_tape(tape, w, &fv);
            w = next;
            lp = tape.sub(lp, ld);
        }
        if let Some(scale) = self.squash {
            let (a, corr) = tanh_squash_on_tape(tape, w);
            w = tape.scale(a, scale);
            lp = tape.sub(lp, corr);
            lp = tape.shift(lp, -(self.dim as f64) * scale.ln());
        }
        Ok((w, lp))
    }

    /// `n×1` log-density at the rows of `points` (a constant or any node).
    /// Unavailable for squashed policies.
    pub fn log_prob_on_tape(&self, tape: &mut Tape, vars: &ParamVars, points: Var) -> Result<Var> {
        if self.squash.is_some() {
            return Err(Error::Contract("density at given points needs an unsquashed policy".into()));
        }
        let (mean, log_std) = self.stats_on_tape(tape, vars)?;
        let mut z = points;
        let mut total_ld: Option<Var> = None;
        for i in (0..self.num_flows).rev() {
            let fv = FlowVars::from_bound(vars, &flow_prefix(i));
            let (prev, ld) = radial_flow_inverse_on_tape(tape, z, &fv);
            z = prev;
            total_ld = Some(match total_ld {
                Some(t) => tape.add(t, ld),
                None => ld,
            });
        }
        let centered = tape.sub(z, mean);
        let inv_std = tape.neg(log_std);
        let inv_std = tape.exp(inv_std);
        let u = tape.mul(centered, inv_std);
        let sq = tape.square(u);
        let half = tape.scale(sq, -0.5);
        let t = tape.sub(half, log_std);
        let t = tape.shift(t, -HALF_LN_2PI);
        let mut lp = tape.sum_rows(t);
        if let Some(ld) = total_ld {
            lp = tape.sub(lp, ld);
        }
        Ok(lp)
    }

    pub fn sample(&self, n: usize, rng: &mut Prng) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let noise = Tensor::new(n, self.dim, rng.normals(n * self.dim));
        let (a, _) = self.sample_on_tape(&mut tape, &vars, &noise)?;
        let v = tape.value(a);
        Ok((0..n).map(|i| v.row_slice(i).to_vec()).collect())
    }

    pub fn log_prob(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let x = tape.constant(Tensor::from_rows(points));
        let lp = self.log_prob_on_tape(&mut tape, &vars, x)?;
        Ok(tape.value(lp).data().to_vec())
    }

    /// Current `(mean, log_std)` of the base Gaussian.
    pub fn base(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let (m, s) = self.stats_on_tape(&mut tape, &vars)?;
        Ok((tape.value(m).data().to_vec(), tape.value(s).data().to_vec()))
    }

    /// Sets the output bias so the base is `N(mean, exp(log_std)²)` for the
    /// fixed state, with all output weights zeroed.
    pub fn set_base(&mut self, mean: &[f64], log_std: &[f64]) -> Result<()> {
        let last = self.net.hidden_sizes.len();
        let w = self
            .params
            .get_mut(&format!("net.l{last}.w"))
            .ok_or_else(|| Error::Config("policy output layer is missing".into()))?;
        w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let b = self.params.get_mut(&format!("net.l{last}.b")).expect("bias next to weight");
        if mean.len() != self.dim || log_std.len() != self.dim {
            return Err(Error::Shape("base parameters must match the policy dimension".into()));
        }
        b.data_mut()[..self.dim].copy_from_slice(mean);
        b.data_mut()[self.dim..].copy_from_slice(log_std);
        Ok(())
    }
}
