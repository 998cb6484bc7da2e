//! Deterministic desk-scale environments, one per action-space shape:
//! parameterized actions ([`PlatformLite`]), mixed continuous and binary
//! ([`DrivePath`]), pure continuous ([`PointMass`]) and pure discrete
//! ([`GridWorld`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Prng;
use crate::policykit::{ActionBounds, HybridAction, HybridActionSpec};

mod drive_path;
mod grid_world;
mod platform_lite;
mod point_mass;

pub use drive_path::{scripted_drive, DrivePath, DriveScript};
pub use grid_world::GridWorld;
pub use platform_lite::{platform_script, scripted_platform, PlatformLite, HOP, LEAP, RUN};
pub use point_mass::PointMass;

/// Info key set when an episode ends only because of the step limit.
pub const TRUNCATED: &str = "truncated";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action: HybridActionSpec,
    /// One entry per continuous component.
    pub bounds: Vec<ActionBounds>,
    pub max_episode_steps: usize,
    pub reward_range: (f64, f64),
    /// Per-coordinate bounds on observations.
    pub observation_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<String, f64>,
}

impl StepResult {
    pub fn truncated(&self) -> bool {
        self.info.get(TRUNCATED).is_some_and(|&v| v != 0.0)
    }

    /// Episode ended on a true terminal state (no bootstrapping past it).
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated()
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    /// Starts an episode. Only environments with random starts draw from `rng`.
    fn reset(&mut self, rng: &mut Prng) -> Vec<f64>;
    fn step(&mut self, action: &HybridAction) -> Result<StepResult>;
}

pub const ENV_NAMES: [&str; 4] = ["platform_lite", "drive_path", "point_mass", "grid_world"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    Ok(match name {
        "platform_lite" => Box::new(PlatformLite::new()),
        "drive_path" => Box::new(DrivePath::new()),
        "point_mass" => Box::new(PointMass::new()),
        "grid_world" => Box::new(GridWorld::new()),
        other => {
            return Err(Error::Config(format!(
                "unknown environment `{other}` (expected one of {})",
                ENV_NAMES.join(", ")
            )))
        }
    })
}

/// Return of a known-optimal or strong scripted policy.
pub fn oracle_return(name: &str) -> Result<f64> {
    match name {
        "grid_world" => Ok(GridWorld::new().optimal_return()),
        "platform_lite" => scripted_platform(),
        "drive_path" => scripted_drive(DriveScript::with_brake()),
        other => Err(Error::Config(format!("no oracle for environment `{other}`"))),
    }
}

pub(crate) fn check_action(spec: &EnvSpec, action: &HybridAction) -> Result<()> {
    spec.action
        .check(action)
        .map_err(|e| Error::Env(format!("{}: {e}", spec.name)))
}

/// Clamps every continuous component into its bounds; returns the clamped
/// values and whether anything moved.
pub(crate) fn clamp_continuous(spec: &EnvSpec, action: &HybridAction) -> (Vec<Vec<f64>>, bool) {
    let mut clamped = false;
    let out = action
        .continuous
        .iter()
        .zip(&spec.bounds)
        .map(|(c, b)| {
            c.iter()
                .zip(b.low.iter().zip(&b.high))
                .map(|(&v, (&lo, &hi))| {
                    let w = v.clamp(lo, hi);
                    clamped |= w != v;
                    w
                })
                .collect()
        })
        .collect();
    (out, clamped)
}

/// Runs one episode with a fixed policy; returns the undiscounted return.
pub fn rollout(
    env: &mut dyn Environment,
    rng: &mut Prng,
    mut policy: impl FnMut(&[f64]) -> Result<HybridAction>,
) -> Result<f64> {
    let mut obs = env.reset(rng);
    let mut total = 0.0;
    loop {
        let step = env.step(&policy(&obs)?)?;
        total += step.reward;
        if step.done {
            return Ok(total);
        }
        obs = step.observation;
    }
}
