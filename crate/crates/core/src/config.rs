use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::distances::DistanceConfig;
use crate::error::{Error, Result};
use crate::Real;

/// Every knob of the pipeline. Serializes to one JSON file; missing fields
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub seed: u64,
    pub top_k_features: usize,
    pub distance: DistanceConfig<Real>,
    pub train: TrainConfig,
    pub fold_count: usize,
    /// Rescale distance-feature columns before the LAD fit.
    pub standardize_features: bool,
    /// Random subsets drawn per (target, n) for the top-n random baseline.
    pub random_subsets: usize,
    pub worst_k: usize,
    /// Largest n on the top-n curve; defaults to every candidate.
    pub topn_max: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20180424;

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            seed: DEFAULT_SEED,
            top_k_features: 1000,
            distance: DistanceConfig::default(),
            train: TrainConfig {
                seed: DEFAULT_SEED,
                ..TrainConfig::default()
            },
            fold_count: 10,
            standardize_features: false,
            random_subsets: 20,
            worst_k: 5,
            topn_max: None,
            output_dir: None,
        }
    }
}

impl GlobalConfig {
    pub fn validate(&self) -> Result<()> {
        self.distance.validate()?;
        self.train.validate()?;
        if self.top_k_features == 0 {
            return Err(Error::InvalidConfig(
                "top_k_features must be at least 1".into(),
            ));
        }
        if self.fold_count < 2 {
            return Err(Error::InvalidConfig("fold_count must be at least 2".into()));
        }
        if self.random_subsets == 0 {
            return Err(Error::InvalidConfig(
                "random_subsets must be at least 1".into(),
            ));
        }
        if self.worst_k == 0 {
            return Err(Error::InvalidConfig("worst_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: GlobalConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Replaces the global seed and the cross-validation seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }
}
