use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParameterSet;
use super::rng::Prng;
use super::tape::{ParamVars, Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Fully connected network: hidden layers use `activation`, the output layer
/// is linear. Layer `i` stores `l{i}.w` (`in×out`) and `l{i}.b` (`1×out`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_sizes: &[usize], output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config(format!("all MLP dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_sizes {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Xavier-uniform weights, zero biases, names prefixed with `prefix`.
pub fn init_params_with(cfg: &MlpConfig, prefix: &str, rng: &mut Prng) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut p = ParameterSet::new();
    for (i, (fan_in, fan_out)) in cfg.layer_dims().into_iter().enumerate() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform_in(-bound, bound)).collect();
        p.insert(format!("{prefix}l{i}.w"), Tensor::new(fan_in, fan_out, w))?;
        p.insert(format!("{prefix}l{i}.b"), Tensor::zeros(1, fan_out))?;
    }
    Ok(p)
}

pub fn init_params(cfg: &MlpConfig, seed: u64) -> Result<ParameterSet> {
    init_params_with(cfg, "", &mut Prng::seed(seed))
}

fn check_bound(cfg: &MlpConfig, vars: &ParamVars, tape: &Tape, prefix: &str) -> Result<()> {
    for (i, (fan_in, fan_out)) in cfg.layer_dims().into_iter().enumerate() {
        for (suffix, shape) in [("w", (fan_in, fan_out)), ("b", (1, fan_out))] {
            let name = format!("{prefix}l{i}.{suffix}");
            let var = vars
                .try_get(&name)
                .ok_or_else(|| Error::Config(format!("missing MLP parameter `{name}`")))?;
            if tape.value(var).shape() != shape {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    tape.value(var).shape()
                )));
            }
        }
    }
    Ok(())
}

/// Records the network applied to the `n×input_dim` node `x`.
pub fn mlp_on_tape(tape: &mut Tape, vars: &ParamVars, cfg: &MlpConfig, prefix: &str, x: Var) -> Result<Var> {
    check_bound(cfg, vars, tape, prefix)?;
    if tape.value(x).cols() != cfg.input_dim {
        return Err(Error::Config(format!(
            "MLP input has {} columns, expected {}",
            tape.value(x).cols(),
            cfg.input_dim
        )));
    }
    let layers = cfg.layer_dims().len();
    let mut h = x;
    for i in 0..layers {
        let w = vars.get(&format!("{prefix}l{i}.w"));
        let b = vars.get(&format!("{prefix}l{i}.b"));
        h = tape.dense(h, w, b);
        if i + 1 < layers {
            h = match cfg.activation {
                Activation::Relu => tape.relu(h),
                Activation::Tanh => tape.tanh(h),
            };
        }
    }
    Ok(h)
}

/// A recorded forward pass: output values plus everything needed for
/// [`MlpForward::backward`].
#[derive(Debug)]
pub struct MlpForward {
    pub output: Vec<f64>,
    pub tape: Tape,
    pub out: Var,
    pub params: ParamVars,
}

impl MlpForward {
    /// `∂(output·output_grad)/∂params`, congruent with the parameter set.
    pub fn backward(&self, output_grad: &[f64]) -> ParameterSet {
        let seed = Tensor::row(output_grad);
        let grads = self.tape.backward(self.out, &seed);
        self.params.collect(&self.tape, &grads)
    }
}

pub fn mlp_forward(params: &ParameterSet, cfg: &MlpConfig, input: &[f64]) -> Result<MlpForward> {
    cfg.validate()?;
    if input.len() != cfg.input_dim {
        return Err(Error::Config(format!(
            "input has length {}, expected {}",
            input.len(),
            cfg.input_dim
        )));
    }
    let mut tape = Tape::new();
    let vars = tape.bind(params, true);
    let x = tape.constant(Tensor::row(input));
    let out = mlp_on_tape(&mut tape, &vars, cfg, "", x)?;
    Ok(MlpForward {
        output: tape.value(out).data().to_vec(),
        tape,
        out,
        params: vars,
    })
}
