//! PIPE scores of two hand-built models on 32x32 toysprites: one whose
//! latents are the ground-truth factors and one that stores the x position
//! twice.
//!
//! ```text
//! cargo run --release --example pipe_metric -- [discriminator steps] [seed]
//! ```

use std::time::Instant;

use dava_lab::pipe::{pipe, DuplicatedFactorOracle, FactorOracle, FpSampler, PipeConfig};
use dava_lab::synthdata::{build_toysprites, ToySpritesConfig};
use dava_lab::vae::LatentModel;

fn main() -> dava_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(2_000, |s| s.parse().expect("steps"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let dataset = build_toysprites(&ToySpritesConfig::fast())?;
    let clean = FactorOracle::new(&dataset);
    let twin = DuplicatedFactorOracle::by_name(&dataset, "x_position")?;

    for sampler in [FpSampler::UniformRange, FpSampler::Permute] {
        let config = PipeConfig { steps, fp_sampler: sampler, ..Default::default() };
        for (name, model) in [("factor oracle", &clean as &dyn LatentModel), ("duplicated x", &twin)] {
            let t = Instant::now();
            let r = pipe(model, &dataset, &config, seed)?;
            println!(
                "{sampler:<14} {name:<14} acc {:.4}  PIPE {:.4}  ({:.1}s)",
                r.test_accuracy,
                r.score,
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
