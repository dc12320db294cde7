//! Run configuration: every hyperparameter of the pipeline in one
//! TOML-serializable struct. A run's effective config is written alongside
//! its outputs.

use crate::attention::BiDirConfig;
use crate::backbone::BackboneConfig;
use crate::cluster::{BlockConfig, MergeConfig};
use crate::error::{Error, Result};
use crate::loss::DiscriminativeParams;
use crate::optim::AdamConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Environment variable naming the default config file.
pub const CONFIG_ENV_VAR: &str = "BISEG_CONFIG";

/// Network widths; `input_dim` is derived from the data when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub input_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub n_s: usize,
    pub n_i: usize,
    pub n_e: usize,
    pub n_c: usize,
    pub d_k: usize,
    pub head_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            input_dim: None,
            hidden: vec![64, 64, 128],
            n_s: 128,
            n_i: 128,
            n_e: 5,
            n_c: 2,
            d_k: 64,
            head_hidden: 64,
        }
    }
}

impl ModelSection {
    pub fn backbone(&self, input_dim: usize) -> BackboneConfig {
        BackboneConfig {
            input_dim,
            hidden: self.hidden.clone(),
            n_s: self.n_s,
            n_i: self.n_i,
            n_e: self.n_e,
            n_c: self.n_c,
            d_k: self.d_k,
            head_hidden: self.head_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_halve_every: u64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_halve_every: 300_000,
            batch_size: 12,
            epochs: 20,
        }
    }
}

impl OptimSection {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            lr_halve_every: self.lr_halve_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockSection {
    pub block_size: f64,
    pub stride: f64,
    pub points_per_block: usize,
}

impl Default for BlockSection {
    fn default() -> Self {
        BlockSection {
            block_size: 1.0,
            stride: 0.5,
            points_per_block: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    pub bandwidth: f64,
    pub merge_voxel: f64,
    pub overlap_threshold: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            bandwidth: 0.6,
            merge_voxel: 0.5,
            overlap_threshold: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub iou_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { iou_threshold: 0.5 }
    }
}

/// Full run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub model: ModelSection,
    pub attention: BiDirConfig,
    pub loss: DiscriminativeParams,
    pub optim: OptimSection,
    pub blocks: BlockSection,
    pub cluster: ClusterSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            block_size: self.blocks.block_size,
            stride: self.blocks.stride,
            points_per_block: self.blocks.points_per_block,
            seed: self.seed,
        }
    }

    pub fn merge_config(&self) -> MergeConfig {
        MergeConfig {
            voxel_size: self.cluster.merge_voxel,
            overlap_threshold: self.cluster.overlap_threshold,
        }
    }

    pub fn effective_threads(&self) -> usize {
        self.threads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.optim.batch_size == 0 {
            return Err(Error::Config {
                detail: "batch_size must be >= 1".into(),
            });
        }
        if self.cluster.bandwidth <= 0.0 {
            return Err(Error::Config {
                detail: "bandwidth must be > 0".into(),
            });
        }
        if !(0.0 < self.eval.iou_threshold && self.eval.iou_threshold <= 1.0) {
            return Err(Error::Config {
                detail: "iou_threshold must be in (0, 1]".into(),
            });
        }
        self.block_config().validate()?;
        self.loss.validate()?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config {
            detail: format!("config serialization failed: {e}"),
        })
    }

    pub fn from_toml_str(s: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Parse {
            path: origin.into(),
            line: 0,
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&body, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}
