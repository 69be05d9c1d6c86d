//! Draws a capacity band plot from trajectory files, or from synthetic
//! trajectories when no files are given.
//!
//! ```text
//! cargo run --release --example capacity_plot -- out.svg [c_trajectory.csv ...]
//! ```

use std::path::PathBuf;

use dava_lab::harness::{capacity_band, plot_capacity};
use dava_lab::train::parse_trajectory_csv;

fn main() -> dava_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("capacity.svg"), PathBuf::from);
    let files: Vec<PathBuf> = args.map(PathBuf::from).collect();

    let runs: Vec<Vec<(u64, f64)>> = if files.is_empty() {
        (0..5)
            .map(|s| {
                (0..=50u64)
                    .map(|i| {
                        let step = i * 400;
                        let rise = (step as f64 * 4e-5).min(0.3 + 0.05 * s as f64);
                        (step, rise)
                    })
                    .collect()
            })
            .collect()
    } else {
        files
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| dava_lab::Error::Config(format!("{}: {e}", p.display())))?;
                parse_trajectory_csv(&text, p)
            })
            .collect::<dava_lab::Result<_>>()?
    };

    let band = capacity_band(&runs)?;
    let last = band.last().expect("non-empty band");
    println!("{} runs, final C = {:.4} ± {:.4} at step {}", runs.len(), last.mean, last.std, last.step);
    std::fs::write(&out, plot_capacity(&[("dava".to_string(), runs)])?)
        .map_err(|e| dava_lab::Error::Config(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
