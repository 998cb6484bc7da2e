//! Numeric substrate: matrices, a reverse-mode tape, feedforward networks,
//! Adam and checkpoint persistence.

mod adam;
mod checkpoint;
mod gradcheck;
mod mlp;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use checkpoint::{config_digest, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use gradcheck::{check_gradients, scalar, GradReport, Tolerance};
pub use mlp::{init_params, init_params_with, mlp_forward, mlp_on_tape, Activation, MlpConfig, MlpForward};
pub use params::ParameterSet;
pub use rng::Prng;
pub use tape::{Gradients, Op, ParamVars, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softplus;
