//! Trains a beta-VAE and reports its reconstruction error and MIG.
//!
//! ```text
//! cargo run --release --example beta_vae_baseline -- [beta] [steps] [seed]
//! ```

use dava_lab::metrics::{mig, representation_sample, DEFAULT_BINS};
use dava_lab::pipe::reconstruction_error;
use dava_lab::synthdata::{build_toysprites, ToySpritesConfig};
use dava_lab::train::{train_beta_vae, Profile, TrainConfig};

fn main() -> dava_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let beta = args.next().map_or(1.0, |s| s.parse().expect("beta"));
    let steps = args.next().map_or(1_000, |s| s.parse().expect("steps"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let dataset = build_toysprites(&ToySpritesConfig::fast())?;
    let config = TrainConfig { total_steps: steps, ..TrainConfig::beta_vae(Profile::Desk, beta) };
    let state = train_beta_vae(&dataset, &config, seed)?;

    let rec = reconstruction_error(&state.model, &dataset, 2_000, seed)?;
    let sample = representation_sample(&state.model, &dataset, 5_000, seed)?;
    println!("beta {beta}, {steps} steps: rec {rec:.5}  MIG {:.3}", mig(&sample, DEFAULT_BINS)?);
    Ok(())
}
