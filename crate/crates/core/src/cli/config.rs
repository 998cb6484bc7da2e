//! Run configuration files.
//!
//! One TOML file per run. Top-level keys pick the environment, preset, seeds
//! and output directory; `[agent]` overrides individual training keys on top
//! of the preset; `[divlab]` configures the distribution-matching sweep.
//!
//! ```toml
//! env = "grid_world"
//! preset = "desk"
//! seeds = [0, 1, 2]
//! out = "runs/grid"
//!
//! [agent]
//! total_steps = 50000
//! num_flows = 0
//!
//! [divlab]
//! target_offset = 2.0
//!
//! [divlab.sweep]
//! alphas = [0.5, 1.0, 2.0, 8.0]
//!
//! [divlab.sweep.fit]
//! steps = 10000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::divlab::{GaussianMixture, SweepConfig};
use crate::envs::{make_env, ENV_NAMES};
use crate::error::{Error, Result};
use crate::hybridsac::{Preset, TrainingConfig};
use crate::numgrad::config_digest;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<String>,
    /// Defaults to `desk`.
    pub preset: Option<Preset>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Training keys replacing the preset's values.
    pub agent: toml::Table,
    pub divlab: DivlabConfig,
}

/// Target geometry plus the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivlabConfig {
    /// Modes sit at `±(offset, offset)`.
    pub target_offset: f64,
    pub target_std: f64,
    pub sweep: SweepConfig,
}

impl Default for DivlabConfig {
    fn default() -> Self {
        Self {
            target_offset: 2.0,
            target_std: 0.7,
            sweep: SweepConfig::default(),
        }
    }
}

impl DivlabConfig {
    pub fn target(&self) -> Result<GaussianMixture> {
        if !(self.target_std > 0.0) || !self.target_offset.is_finite() {
            return Err(Error::Config("divlab target needs a finite offset and a positive std".into()));
        }
        Ok(GaussianMixture::symmetric_pair(self.target_offset, self.target_std))
    }

    /// Canonical text hashed into every divlab output.
    pub fn canonical_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize divlab config: {e}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The preset with `[agent]` applied; `seed` is left at the preset value.
    pub fn training(&self) -> Result<TrainingConfig> {
        if self.agent.contains_key("preset") {
            return Err(Error::Config("`agent.preset` is not a key; set `preset` at the top level".into()));
        }
        if self.agent.contains_key("seed") {
            return Err(Error::Config("`agent.seed` is not a key; use `seeds` or --seed".into()));
        }
        let base = TrainingConfig::preset(self.preset.unwrap_or_default());
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in &self.agent {
            table.insert(k.clone(), v.clone());
        }
        let config: TrainingConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[agent] {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    /// Environment name, checked against the known environments.
    pub fn env_name(&self) -> Result<String> {
        let name = self.env.clone().ok_or_else(|| {
            Error::Config(format!("`env` is required (one of {})", ENV_NAMES.join(", ")))
        })?;
        make_env(&name)?;
        Ok(name)
    }
}

/// What a checkpoint needs to rebuild its agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedRun {
    pub env: String,
    pub agent: TrainingConfig,
}

impl ResolvedRun {
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize run config: {e}")))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("checkpoint config: {e}")))
    }

    pub fn digest(&self) -> Result<String> {
        Ok(config_digest(&self.to_text()?))
    }
}
