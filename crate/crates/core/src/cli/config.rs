use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::{ArchConfig, TrainConfig};
use crate::ban_synth::SynthConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::recipe::Recipe;
use crate::theory::TheoryCheckConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Accept as on-body when `p_on >= threshold`.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LomoConfig {
    /// Number of seeds; seed `i` is `run seed + i`.
    pub seeds: usize,
    /// Seed `i` holds out motion `i mod n` instead of every seed holding
    /// out every motion.
    pub rotating: bool,
}

impl Default for LomoConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            rotating: true,
        }
    }
}

/// Everything a command can be configured with. The train seed is always
/// overwritten by the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub recipe: Recipe,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub lomo: LomoConfig,
    pub theory: TheoryCheckConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.recipe.validate()?;
        self.synth.validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        self.theory.validate()?;
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::config(format!(
                "threshold {} outside [0, 1]",
                self.eval.threshold
            )));
        }
        if self.lomo.seeds == 0 {
            return Err(Error::config("lomo needs at least one seed"));
        }
        Ok(())
    }
}
