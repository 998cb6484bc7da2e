//! Hybrid SAC: twin critics with one output per discrete action, a
//! shared-trunk actor with categorical and Gaussian (optionally flow) heads,
//! separate learned temperatures for the discrete and continuous entropy
//! terms, and Polyak-averaged target critics.

mod agent;
mod buffer;
mod config;
mod metrics;
mod nets;
mod update;

pub use agent::{
    default_target_entropy_c, default_target_entropy_d, evaluate, ActMode, EvalSummary, HybridSac, StepRecord,
    UpdateNoise, UpdateStats,
};
pub use buffer::{ReplayBuffer, Transition};
pub use config::{Preset, TrainingConfig};
pub use metrics::{train, MetricsRow, TrainReport};
pub use nets::{actor_on_tape, critic_on_tape, policy_heads, ActorPass, Batch, Networks};
pub use update::{
    actor_losses_on_tape, actor_update, critic_loss_on_tape, critic_target, critic_update, polyak_update, ActorStats,
    Temperature, TemperatureState,
};
