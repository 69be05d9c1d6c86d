//! Metric rows, pairwise rank correlations and their heatmap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rank::spearman;

/// One metric value of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub architecture: String,
    /// Hash of the hyperparameters that produced the model.
    pub digest: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    /// Generated-sample strategy for PIPE rows, empty otherwise.
    pub sampler: String,
    /// `;`-separated flags such as `collapsed` or `failed`.
    pub flags: String,
}

impl MetricRow {
    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.split(';').any(|f| f == flag)
    }

    /// Identity of the model that produced the row.
    pub fn model_key(&self) -> (String, String, u64) {
        (self.architecture.clone(), self.digest.clone(), self.seed)
    }

    /// Uniqueness key within a metrics file.
    pub fn key(&self) -> (String, String, String, u64, String) {
        (self.dataset.clone(), self.architecture.clone(), self.digest.clone(), self.seed, self.metric.clone())
    }
}

/// Pairwise Spearman correlations of metrics over the models of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub dataset: String,
    pub metrics: Vec<String>,
    pub models: usize,
    /// `rho[a][b]`; NaN where a metric has no rank variance.
    pub rho: Vec<Vec<f64>>,
}

/// One correlation matrix per dataset. Models lacking any of the metrics
/// are dropped with a warning; failed rows are ignored.
pub fn correlation_report(rows: &[MetricRow]) -> Result<Vec<CorrelationMatrix>> {
    let mut by_dataset: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    rows.iter().filter(|r| !r.has_flag("failed")).for_each(|r| by_dataset.entry(&r.dataset).or_default().push(r));
    let mut out = Vec::new();
    for (dataset, rows) in by_dataset {
        let metrics: Vec<String> = rows.iter().map(|r| r.metric.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let mut table: BTreeMap<(String, String, u64), BTreeMap<&str, f64>> = BTreeMap::new();
        for r in &rows {
            table.entry(r.model_key()).or_default().insert(&r.metric, r.value);
        }
        let complete: Vec<_> = table
            .iter()
            .filter(|(key, vals)| {
                let ok = metrics.iter().all(|m| vals.get(m.as_str()).is_some_and(|v| v.is_finite()));
                if !ok {
                    log::warn!("{dataset}: model {key:?} lacks some metric values; excluded from correlations");
                }
                ok
            })
            .map(|(_, vals)| vals)
            .collect();
        if complete.len() < 2 {
            return Err(Error::InvalidArgument(format!("{dataset}: need at least two models with all metrics")));
        }
        let column = |m: &str| complete.iter().map(|v| v[m]).collect::<Vec<f64>>();
        let cols: Vec<Vec<f64>> = metrics.iter().map(|m| column(m)).collect();
        let rho = cols.iter().map(|a| cols.iter().map(|b| spearman(a, b).unwrap_or(f64::NAN)).collect()).collect();
        out.push(CorrelationMatrix { dataset: dataset.to_string(), metrics, models: complete.len(), rho });
    }
    Ok(out)
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = format!("metric,{}\n", self.metrics.join(","));
        for (m, row) in self.metrics.iter().zip(&self.rho) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{m},{}", vals.join(","));
        }
        s
    }

    /// Heatmap with every coefficient multiplied by 100 and rounded.
    pub fn to_svg(&self) -> String {
        let n = self.metrics.len();
        let (cell, margin) = (56.0, 90.0);
        let size = margin + cell * n as f64 + 10.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            size + 24.0
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"16\" text-anchor=\"middle\">{} (Spearman x 100)</text>", size / 2.0, self.dataset);
        for (i, m) in self.metrics.iter().enumerate() {
            let c = margin + cell * (i as f64 + 0.5);
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{m}</text>", margin - 6.0, 24.0 + c);
            let _ = writeln!(s, "<text x=\"{c}\" y=\"{}\" text-anchor=\"middle\">{m}</text>", margin + 10.0 - 24.0);
        }
        for (i, row) in self.rho.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
                let (fill, label) = if v.is_finite() {
                    let t = v.clamp(-1.0, 1.0);
                    let (r, g, b) = if t >= 0.0 {
                        (255.0 * (1.0 - t), 255.0 * (1.0 - 0.6 * t), 255.0)
                    } else {
                        (255.0, 255.0 * (1.0 + 0.6 * t), 255.0 * (1.0 + t))
                    };
                    (format!("rgb({:.0},{:.0},{:.0})", r, g, b), format!("{:.0}", v * 100.0))
                } else {
                    ("rgb(220,220,220)".to_string(), "n/a".to_string())
                };
                let _ = writeln!(
                    s,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/>\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}
