//! Spearman correlations between metrics across models, from a metrics.csv
//! or from a small synthetic table.
//!
//! ```text
//! cargo run --release --example correlation_report -- [metrics.csv]
//! ```

use dava_lab::harness::read_metrics;
use dava_lab::metrics::{correlation_report, MetricRow};

fn synthetic() -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for seed in 0..8u64 {
        let quality = seed as f64 / 7.0;
        for (metric, value) in [("mig", quality), ("pipe", 0.2 + 0.6 * quality * quality), ("rec", 0.01 * (8 - seed) as f64)] {
            rows.push(MetricRow {
                dataset: "toysprites-32px".into(),
                architecture: "dava".into(),
                digest: "synthetic".into(),
                seed,
                metric: metric.into(),
                value,
                sampler: String::new(),
                flags: String::new(),
            });
        }
    }
    rows
}

fn main() -> dava_lab::Result<()> {
    let rows = match std::env::args().nth(1) {
        Some(p) => read_metrics(p.as_ref())?,
        None => synthetic(),
    };
    for m in correlation_report(&rows)? {
        println!("{} ({} models)", m.dataset, m.models);
        print!("{}", m.to_csv());
    }
    Ok(())
}
