//! Fitting Gaussian and flow policies on a fixed state to a Gaussian-mixture
//! target under several divergences, and measuring how much mass lands on
//! each mode.

mod density;
mod fit;
mod objective;
mod policy;
mod sweep;
mod target;

pub use density::{
    kde_density, kde_density_with, linspace, mode_mass, mode_mass_of, scott_bandwidth, square_grid, trapezoid_2d,
};
pub use fit::{fit, switch_weight, FitResult, MatchConfig};
pub use objective::{estimate_objective, objective_on_tape, Estimate, ObjectiveKind, SampleBatch};
pub use policy::{fixed_state, MatchPolicy, FIXED_STATE_DIM, FIXED_STATE_SEED};
pub use sweep::{run_cell, temperature_sweep, SweepCell, SweepConfig, SWEEP_FLOWS, SWEEP_OBJECTIVES};
pub use target::{GaussianMixture, TemperedTarget, WeightedSamples};
