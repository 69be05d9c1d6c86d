//! A short DAVA run on 32x32 toysprites, printing the capacity schedule and
//! discriminator accuracy as training proceeds.
//!
//! ```text
//! cargo run --release --example train_dava -- [steps] [seed]
//! ```

use dava_lab::synthdata::{build_toysprites, ToySpritesConfig};
use dava_lab::train::{Profile, TrainConfig, TrainState};

fn main() -> dava_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(1_000, |s| s.parse().expect("steps"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let dataset = build_toysprites(&ToySpritesConfig::fast())?;
    let config = TrainConfig { total_steps: steps, ..TrainConfig::dava(Profile::Desk) };
    let mut state = TrainState::new(config, dataset.shape(), seed)?;
    let every = (steps / 10).max(1);
    state.run(&dataset, |st, d| {
        if st.step % every == 0 {
            println!(
                "step {:>6}  recon {:>8.2}  kl {:>6.3}  C {:.5}  acc {:.3}  mu_base {:.2}",
                st.step,
                d.reconstruction,
                d.kl_total,
                d.capacity,
                d.accuracy.unwrap_or(f64::NAN),
                d.mu_base
            );
        }
        Ok(())
    })?;
    println!("final capacity {:.5} nats", state.capacity());
    Ok(())
}
