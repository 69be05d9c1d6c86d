//! MIG, DCI disentanglement and the FactorVAE metric for a representation
//! that equals the factors and for pure noise.
//!
//! ```text
//! cargo run --release --example supervised_metrics
//! ```

use dava_lab::metrics::{dci_disentanglement, fvae_metric, mig, representation_sample, FvaeConfig, DEFAULT_BINS};
use dava_lab::pipe::{FactorOracle, NoiseModel};
use dava_lab::synthdata::{build_toysprites, ToySpritesConfig};
use dava_lab::vae::LatentModel;

fn main() -> dava_lab::Result<()> {
    let dataset = build_toysprites(&ToySpritesConfig::fast())?;
    let identity = FactorOracle::new(&dataset);
    let noise = NoiseModel::new(&dataset, dataset.space().num_factors(), 7)?;
    let k = dataset.space().num_factors();

    println!("{:<10} {:>6} {:>6} {:>6}", "model", "MIG", "DCI", "FVAE");
    for (name, model) in [("identity", &identity as &dyn LatentModel), ("noise", &noise)] {
        let sample = representation_sample(model, &dataset, 10_000, 0)?;
        let fvae = fvae_metric(model, &dataset, &FvaeConfig::default(), 0)?;
        println!(
            "{name:<10} {:>6.3} {:>6.3} {:>6.3}",
            mig(&sample, DEFAULT_BINS)?,
            dci_disentanglement(&sample, DEFAULT_BINS)?,
            fvae.accuracy
        );
    }
    println!("chance level for FVAE with {k} factors: {:.3}", 1.0 / k as f64);
    Ok(())
}
