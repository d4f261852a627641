//! Versioned JSON checkpoints holding the config echo, all four networks,
//! the optimizer states and the iteration counter.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::networks::{init_params, Model, Role};
use crate::optim::Optimizer;

pub const MAGIC: &str = "ebcomplete-checkpoint";
pub const VERSION: u32 = 1;

/// One optimizer per network role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerStates {
    pub encoder: Optimizer,
    pub decoder: Optimizer,
    pub energy: Optimizer,
    pub discriminator: Optimizer,
}

impl OptimizerStates {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            encoder: Optimizer::from_config(&cfg.optim.encoder),
            decoder: Optimizer::from_config(&cfg.optim.decoder),
            energy: Optimizer::from_config(&cfg.optim.energy),
            discriminator: Optimizer::from_config(&cfg.optim.discriminator),
        }
    }

    pub fn get_mut(&mut self, role: Role) -> &mut Optimizer {
        match role {
            Role::Encoder => &mut self.encoder,
            Role::Decoder => &mut self.decoder,
            Role::Energy => &mut self.energy,
            Role::Discriminator => &mut self.discriminator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub iteration: u64,
    pub config: TrainConfig,
    pub model: Model,
    pub optimizers: OptimizerStates,
}

impl Checkpoint {
    /// Fresh state at iteration 0.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            magic: MAGIC.into(),
            version: VERSION,
            iteration: 0,
            config: config.clone(),
            model: init_params(&config.model, config.seed)?,
            optimizers: OptimizerStates::from_config(config),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        match probe.get("magic").and_then(|m| m.as_str()) {
            Some(MAGIC) => {}
            other => {
                return Err(Error::Checkpoint(format!("bad magic string {other:?}")));
            }
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(VERSION) => {}
            other => return Err(Error::Checkpoint(format!("unsupported version {other:?}"))),
        }
        let ckpt: Checkpoint = serde_json::from_value(probe)?;
        ckpt.model.validate()?;
        if ckpt.model.config != ckpt.config.model {
            return Err(Error::Checkpoint("model config differs from the config echo".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint_{iteration:08}.json")
}

/// The checkpoint with the highest iteration in `dir`, if any.
pub fn latest_in(dir: &Path) -> Result<Option<(u64, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(it) = name
            .strip_prefix("checkpoint_")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| it > *b) {
            best = Some((it, path));
        }
    }
    Ok(best)
}
