//! Versioned model checkpoints: named parameter tensors, the effective run
//! config, optimizer state, and the global step counter, as one JSON record.

use crate::backbone::SegModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::optim::AdamState;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub model: SegModel,
    pub adam: Option<AdamState>,
    pub global_step: u64,
    pub epochs_completed: usize,
}

impl Checkpoint {
    pub fn new(
        config: RunConfig,
        model: SegModel,
        adam: Option<AdamState>,
        global_step: u64,
        epochs_completed: usize,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config,
            model,
            adam,
            global_step,
            epochs_completed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self).map_err(|e| Error::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut ck: Checkpoint = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                got: ck.format_version,
            });
        }
        ck.model.reset_grads();
        // shape sanity over the deserialized tensors
        for (name, l) in ck.model.named_params() {
            if !l.weight.all_finite() || !l.bias.all_finite() {
                return Err(Error::Numeric {
                    detail: format!("checkpoint parameter {name} holds non-finite values"),
                });
            }
        }
        Ok(ck)
    }
}
