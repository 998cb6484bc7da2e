use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Prng;

use super::density::{kde_density, mode_mass, square_grid};
use super::fit::{fit, MatchConfig};
use super::objective::ObjectiveKind;
use super::target::GaussianMixture;

/// Default objectives and flow counts of a temperature sweep.
pub const SWEEP_OBJECTIVES: [ObjectiveKind; 2] = [ObjectiveKind::ForwardKl, ObjectiveKind::ReverseKl];
pub const SWEEP_FLOWS: [usize; 2] = [0, 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub objectives: Vec<ObjectiveKind>,
    pub flows: Vec<usize>,
    /// Base fit settings; objective, flows and alpha are overridden per cell.
    pub fit: MatchConfig,
    pub mode_samples: usize,
    /// Policy samples for the density grid; 0 skips density export.
    pub density_samples: usize,
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 2.0, 8.0],
            objectives: SWEEP_OBJECTIVES.to_vec(),
            flows: SWEEP_FLOWS.to_vec(),
            fit: MatchConfig::default(),
            mode_samples: 10_000,
            density_samples: 2_000,
            grid_points: 41,
            grid_lo: -5.0,
            grid_hi: 5.0,
        }
    }
}

/// One `(objective, flows, alpha)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub objective: ObjectiveKind,
    pub flows: usize,
    pub alpha: f64,
    /// Per-mode mass, or the failure message.
    pub outcome: std::result::Result<Vec<f64>, String>,
    /// `(x, y, density)` rows.
    pub density: Vec<[f64; 3]>,
    pub final_loss: Option<f64>,
}

/// Fits and measures one cell.
pub fn run_cell(target: &GaussianMixture, config: &SweepConfig, objective: ObjectiveKind, flows: usize, alpha: f64) -> SweepCell {
    let fit_config = MatchConfig {
        objective,
        num_flows: flows,
        alpha,
        ..config.fit.clone()
    };
    let mut cell = SweepCell {
        objective,
        flows,
        alpha,
        outcome: Err(String::new()),
        density: Vec::new(),
        final_loss: None,
    };
    let measured = (|| -> Result<(Vec<f64>, Vec<[f64; 3]>, Option<f64>)> {
        let result = fit(target, &fit_config)?;
        let mut rng = Prng::split(fit_config.seed, 3);
        let mass = mode_mass(&result.policy, target, config.mode_samples, &mut rng)?;
        let mut density = Vec::new();
        if config.density_samples >= 2 && target.dim() == 2 {
            let samples = result.policy.sample(config.density_samples, &mut rng)?;
            let grid = square_grid(config.grid_lo, config.grid_hi, config.grid_points);
            let values = kde_density(&samples, &grid)?;
            density = grid.iter().zip(values).map(|(g, v)| [g[0], g[1], v]).collect();
        }
        Ok((mass, density, result.losses.last().copied()))
    })();
    match measured {
        Ok((mass, density, last)) => {
            cell.outcome = Ok(mass);
            cell.density = density;
            cell.final_loss = last;
        }
        Err(e) => cell.outcome = Err(e.to_string()),
    }
    cell
}

/// Every `alpha × objective × flows` cell; failed cells are recorded and the
/// sweep continues.
pub fn temperature_sweep(target: &GaussianMixture, config: &SweepConfig) -> Result<Vec<SweepCell>> {
    if config.alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Config("sweep temperatures must be positive".into()));
    }
    let mut cells = Vec::new();
    for &alpha in &config.alphas {
        for &objective in &config.objectives {
            for &flows in &config.flows {
                cells.push(run_cell(target, config, objective, flows, alpha));
            }
        }
    }
    Ok(cells)
}
