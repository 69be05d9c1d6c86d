//! A miniature sweep: two architectures, two seeds, a few hundred steps on
//! a 16x16 dataset. Running it twice resumes from the manifest and leaves
//! metrics.csv unchanged.
//!
//! ```text
//! cargo run --release --example sweep -- [output dir]
//! ```

use std::path::PathBuf;

use dava_lab::harness::{load_or_build_dataset, run_sweep, summarize, summary_table, ExperimentConfig, TrainAndEvaluate};

const CONFIG: &str = r#"{
    "profile": "desk",
    "dataset": {"side": 16, "x_positions": 4, "y_positions": 4, "min_half_extent": 0.125, "max_half_extent": 0.25},
    "architectures": [{"architecture": "dava"}, {"architecture": "beta_vae", "beta": 1.0}],
    "seeds": [0, 1],
    "metrics": ["pipe", "rec", "pipe_rec", "mig", "fvae"],
    "train": {"total_steps": 300, "batch_size": 32, "z_dim": 4, "decoder_channels": [16, 16, 16], "hidden_units": 64},
    "pipe": {"set_size": 1024, "steps": 300, "batch_size": 32},
    "fvae": {"votes": 200, "scale_samples": 1000},
    "supervised_samples": 2000
}"#;

fn main() -> dava_lab::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dava-lab-sweep"), PathBuf::from);
    let config = ExperimentConfig::from_json(CONFIG)?;
    let dataset = load_or_build_dataset(&config.dataset_config(), &out.join("cache"))?;

    let outcome = run_sweep(&config, &out, &TrainAndEvaluate { dataset: &dataset })?;
    println!("executed {} runs, {} failed; {} rows in {}", outcome.executed.len(), outcome.failed.len(), outcome.rows.len(), out.join("metrics.csv").display());
    print!("{}", summary_table(&summarize(&outcome.rows)));
    Ok(())
}
