use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

use super::capacity::GRACE_BAND;

/// Step counts and image sizes of the two run profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 32x32 images, 20,000 steps, batch 64, 3 seeds.
    Desk,
    /// 64x64 images, 150,000 steps, batch 128, 5 seeds.
    Full,
}

impl Profile {
    pub fn image_side(self) -> usize {
        match self {
            Profile::Desk => 32,
            Profile::Full => 64,
        }
    }

    pub fn total_steps(self) -> u64 {
        match self {
            Profile::Desk => 20_000,
            Profile::Full => 150_000,
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Profile::Desk => 64,
            Profile::Full => 128,
        }
    }

    pub fn default_seeds(self) -> Vec<u64> {
        match self {
            Profile::Desk => vec![0, 1, 2],
            Profile::Full => vec![0, 1, 2, 3, 4],
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected desk or full)"))),
        }
    }
}

/// Hyperparameters of the adaptive adversarial objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DavaConfig {
    pub gamma: f64,
    pub delta_c: f64,
    pub mu_enc: f64,
    pub mu_dec: f64,
    pub label_smoothing: f64,
    pub grace_band: f64,
    pub discriminator_optimizer: AdamConfig,
    pub discriminator_max_grad_norm: f64,
    pub instance_norm: bool,
}

impl Default for DavaConfig {
    fn default() -> Self {
        DavaConfig {
            gamma: 500.0,
            delta_c: 4e-5,
            mu_enc: 0.3,
            mu_dec: 0.001,
            label_smoothing: 0.1,
            grace_band: GRACE_BAND,
            discriminator_optimizer: AdamConfig::default(),
            discriminator_max_grad_norm: 1.0,
            instance_norm: true,
        }
    }
}

/// Training objective, selected by the `architecture` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Objective {
    Dava(DavaConfig),
    /// Reconstruction plus `beta` times the KL divergence.
    BetaVae { beta: f64 },
    /// Reconstruction plus `gamma * |KL - C|` with `C` ramped linearly to
    /// `c_max` over `iteration_threshold` steps.
    AnnealedVae { gamma: f64, c_max: f64, iteration_threshold: u64 },
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Dava(_) => "dava",
            Objective::BetaVae { .. } => "beta_vae",
            Objective::AnnealedVae { .. } => "annealed_vae",
        }
    }

    pub fn dava(&self) -> Option<&DavaConfig> {
        match self {
            Objective::Dava(c) => Some(c),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            Objective::Dava(c) => {
                if !(c.gamma >= 0.0 && c.mu_enc >= 0.0 && c.mu_dec >= 0.0) {
                    return bad("gamma, mu_enc and mu_dec must be non-negative".into());
                }
                if !(c.delta_c > 0.0) {
                    return bad(format!("delta_c must be positive, got {}", c.delta_c));
                }
                if !(c.grace_band > 0.5 && c.grace_band <= 1.0) {
                    return bad(format!("grace_band must lie in (0.5, 1], got {}", c.grace_band));
                }
                if !(0.0..0.5).contains(&c.label_smoothing) {
                    return bad(format!("label_smoothing must lie in [0, 0.5), got {}", c.label_smoothing));
                }
                if !(c.discriminator_max_grad_norm > 0.0) {
                    return bad("discriminator_max_grad_norm must be positive".into());
                }
                validate_adam(&c.discriminator_optimizer)
            }
            Objective::BetaVae { beta } if !(*beta >= 0.0) => bad(format!("beta must be non-negative, got {beta}")),
            Objective::AnnealedVae { gamma, c_max, iteration_threshold } => {
                if !(*gamma >= 0.0 && *c_max >= 0.0) || *iteration_threshold == 0 {
                    return bad("annealed objective needs gamma >= 0, c_max >= 0 and a positive threshold".into());
                }
                Ok(())
            }
            Objective::BetaVae { .. } => Ok(()),
        }
    }
}

fn validate_adam(c: &AdamConfig) -> Result<()> {
    let ok = c.learning_rate > 0.0 && (0.0..1.0).contains(&c.beta1) && (0.0..1.0).contains(&c.beta2) && c.epsilon > 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid Adam settings {c:?}")))
    }
}

fn default_decoder_channels() -> [usize; 3] {
    [64, 64, 64]
}

fn default_hidden_units() -> usize {
    256
}

fn default_trajectory_every() -> u64 {
    100
}

fn default_max_grad_norm() -> f64 {
    1.0
}

/// Everything that determines a training run besides the dataset and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub z_dim: usize,
    #[serde(default = "default_decoder_channels")]
    pub decoder_channels: [usize; 3],
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
    pub batch_size: usize,
    pub total_steps: u64,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
    /// Interval of the recorded `(step, C)` trajectory.
    #[serde(default = "default_trajectory_every")]
    pub trajectory_every: u64,
    /// Interval between checkpoints; `None` writes only the final one.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    pub objective: Objective,
}

impl TrainConfig {
    pub fn preset(profile: Profile, objective: Objective) -> Self {
        TrainConfig {
            z_dim: 10,
            decoder_channels: default_decoder_channels(),
            hidden_units: default_hidden_units(),
            batch_size: profile.batch_size(),
            total_steps: profile.total_steps(),
            optimizer: AdamConfig::default(),
            max_grad_norm: default_max_grad_norm(),
            trajectory_every: default_trajectory_every(),
            checkpoint_every: None,
            objective,
        }
    }

    pub fn dava(profile: Profile) -> Self {
        Self::preset(profile, Objective::Dava(DavaConfig::default()))
    }

    pub fn beta_vae(profile: Profile, beta: f64) -> Self {
        Self::preset(profile, Objective::BetaVae { beta })
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_dim == 0 || self.batch_size == 0 || self.trajectory_every == 0 {
            return Err(Error::Config("z_dim, batch_size and trajectory_every must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive when set".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        validate_adam(&self.optimizer)?;
        self.objective.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = TrainConfig::dava(Profile::Desk);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"architecture\":\"dava\""));
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);

        let beta = r#"{"z_dim": 10, "batch_size": 8, "total_steps": 5, "objective": {"architecture": "beta_vae", "beta": 4}}"#;
        let cfg = TrainConfig::from_json(beta).unwrap();
        assert_eq!(cfg.objective, Objective::BetaVae { beta: 4.0 });
        assert_eq!(cfg.decoder_channels, [64, 64, 64]);

        let typo = r#"{"z_dim": 10, "batch_size": 8, "total_steps": 5, "lr": 1, "objective": {"architecture": "beta_vae", "beta": 4}}"#;
        assert!(TrainConfig::from_json(typo).is_err());
        let nested = r#"{"z_dim": 10, "batch_size": 8, "total_steps": 5, "objective": {"architecture": "dava", "gama": 4}}"#;
        assert!(TrainConfig::from_json(nested).is_err());
    }

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let d = DavaConfig::default();
        assert_eq!((d.gamma, d.delta_c, d.mu_enc, d.mu_dec), (500.0, 4e-5, 0.3, 0.001));
        assert_eq!(d.grace_band, 0.51);
        let full = TrainConfig::dava(Profile::Full);
        assert_eq!((full.batch_size, full.total_steps, full.z_dim), (128, 150_000, 10));
        let desk = TrainConfig::dava(Profile::Desk);
        assert_eq!((desk.batch_size, desk.total_steps), (64, 20_000));
    }

    #[test]
    fn rejects_out_of_range_settings() {
        let mut cfg = TrainConfig::dava(Profile::Desk);
        if let Objective::Dava(d) = &mut cfg.objective {
            d.grace_band = 0.5;
        }
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::dava(Profile::Desk);
        if let Objective::Dava(d) = &mut cfg.objective {
            d.label_smoothing = 0.5;
        }
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::beta_vae(Profile::Desk, -1.0).validate().is_err());
    }
}
