//! Training loops: the adaptive adversarial objective with its accuracy
//! driven capacity schedule, and the KL-weighted and annealed baselines.

mod adversary;
mod capacity;
mod config;
pub mod grads;
mod permute;
mod state;

pub use adversary::{Adversary, AdversaryStep, Discriminator, PinnedAccuracy};
pub use capacity::{capacity_direction, mu_base, update_capacity, update_capacity_with_band, GRACE_BAND};
pub use config::{DavaConfig, Objective, Profile, TrainConfig};
pub use grads::discriminator_loss;
pub use permute::permute_dims;
pub use state::{parse_trajectory_csv, train, train_beta_vae, trajectory_csv, StepDiagnostics, TrainState};
