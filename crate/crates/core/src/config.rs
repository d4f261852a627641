//! Run configuration. Every field has a default, so a config file only
//! needs the keys it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Family;
use crate::error::{Error, Result};

/// Network dimensions and layer widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Points per cloud.
    pub num_points: usize,
    /// Latent code dimension.
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub energy_hidden: Vec<usize>,
    /// Per-point layers of the discriminator, before pooling.
    pub disc_point_hidden: Vec<usize>,
    /// Layers of the discriminator head, after pooling.
    pub disc_head_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_points: 256,
            latent_dim: 64,
            encoder_hidden: vec![64, 128],
            decoder_hidden: vec![256, 512],
            energy_hidden: vec![128, 128],
            disc_point_hidden: vec![64, 128],
            disc_head_hidden: vec![64],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_points == 0 || self.latent_dim == 0 {
            return Err(Error::Config("num_points and latent_dim must be positive".into()));
        }
        let all = [
            &self.encoder_hidden,
            &self.decoder_hidden,
            &self.energy_hidden,
            &self.disc_point_hidden,
            &self.disc_head_hidden,
        ];
        if all.iter().any(|layers| layers.contains(&0)) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.disc_point_hidden.is_empty() {
            return Err(Error::Config("discriminator needs at least one per-point layer".into()));
        }
        Ok(())
    }
}

/// Short-run Langevin chain settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinConfig {
    /// Number of steps K.
    pub steps: usize,
    /// δ², the squared step size.
    pub step_size_sq: f64,
    /// Multiplier on the injected noise; 0 turns the chain into gradient descent.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            step_size_sq: 0.05,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("langevin steps must be at least 1".into()));
        }
        if !(self.step_size_sq > 0.0 && self.step_size_sq.is_finite()) {
            return Err(Error::Config(format!(
                "langevin step_size_sq must be positive, got {}",
                self.step_size_sq
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("langevin noise_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Which cloud feeds the real branch of the discriminator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvRealSource {
    /// The decoder's reconstruction of the complete sample.
    #[default]
    Reconstruction,
    /// The complete sample itself.
    Data,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// λ₁
    pub fidelity: f64,
    /// λ₂
    pub adversarial: f64,
    /// λ, weight of the energy magnitude penalty.
    pub energy_reg: f64,
    /// Use squared point distances inside the Chamfer losses.
    pub squared_chamfer: bool,
    pub adv_real_source: AdvRealSource,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            fidelity: 2.0,
            adversarial: 1.0,
            energy_reg: 0.1,
            squared_chamfer: false,
            adv_real_source: AdvRealSource::Reconstruction,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fidelity", self.fidelity),
            ("adversarial", self.adversarial),
            ("energy_reg", self.energy_reg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One optimizer per network role.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub encoder: OptimizerConfig,
    pub decoder: OptimizerConfig,
    pub energy: OptimizerConfig,
    pub discriminator: OptimizerConfig,
}

impl OptimizerSettings {
    pub fn set_lr(&mut self, lr: f64) {
        for o in [
            &mut self.encoder,
            &mut self.decoder,
            &mut self.energy,
            &mut self.discriminator,
        ] {
            o.lr = lr;
        }
    }
}

/// Module removal switches.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub disable_eb_transport: bool,
    pub disable_residual_sampling: bool,
    pub disable_adversarial: bool,
}

/// Synthetic corpus settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub families: Vec<Family>,
    /// Shape instances generated per family, across all pools.
    pub instances_per_family: usize,
    /// Instances per family reserved for evaluation.
    pub heldout_per_family: usize,
    /// Partial views generated per training partial instance.
    pub partial_views: usize,
    /// Partial views generated per held-out instance.
    pub heldout_views: usize,
    pub keep_fraction_min: f64,
    pub keep_fraction_max: f64,
    pub num_points: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            instances_per_family: 40,
            heldout_per_family: 10,
            partial_views: 8,
            heldout_views: 2,
            keep_fraction_min: 0.4,
            keep_fraction_max: 0.6,
            num_points: 256,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("at least one shape family is required".into()));
        }
        if self.heldout_per_family + 2 > self.instances_per_family {
            return Err(Error::Config(format!(
                "instances_per_family {} leaves no room for both training pools after {} held out",
                self.instances_per_family, self.heldout_per_family
            )));
        }
        if self.partial_views == 0 || self.heldout_views == 0 || self.num_points == 0 {
            return Err(Error::Config("view counts and num_points must be at least 1".into()));
        }
        let (lo, hi) = (self.keep_fraction_min, self.keep_fraction_max);
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "keep fraction range [{lo}, {hi}] must lie strictly inside (0, 1)"
            )));
        }
        Ok(())
    }
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub langevin: LangevinConfig,
    pub loss: LossWeights,
    pub optim: OptimizerSettings,
    pub ablation: Ablation,
    pub data: DataConfig,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            langevin: LangevinConfig::default(),
            loss: LossWeights::default(),
            optim: OptimizerSettings::default(),
            ablation: Ablation::default(),
            data: DataConfig::default(),
            batch_size: 16,
            iterations: 2000,
            seed: 0,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.langevin.validate()?;
        self.loss.validate()?;
        self.data.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.model.num_points != self.data.num_points {
            return Err(Error::Config(format!(
                "model.num_points {} differs from data.num_points {}",
                self.model.num_points, self.data.num_points
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_published_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!(c.langevin.steps, 8);
        assert_eq!(c.langevin.step_size_sq, 0.05);
        assert_eq!(c.loss.energy_reg, 0.1);
        assert_eq!(c.loss.fidelity, 2.0);
        assert_eq!(c.loss.adversarial, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_overrides_only_given_keys() {
        let c = TrainConfig::from_toml_str("iterations = 5\n[langevin]\nsteps = 3\n").unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.langevin.steps, 3);
        assert_eq!(c.langevin.step_size_sq, 0.05);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(TrainConfig::from_toml_str("iteratons = 5\n").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = TrainConfig::default();
        let back = TrainConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn invalid_langevin_rejected() {
        let mut c = LangevinConfig::default();
        c.steps = 0;
        assert!(c.validate().is_err());
        c.steps = 1;
        c.step_size_sq = 0.0;
        assert!(c.validate().is_err());
    }
}
