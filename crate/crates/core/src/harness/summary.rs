//! Mean and spread of every metric per architecture.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::metrics::MetricRow;

use super::plot::mean_std;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub architecture: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    /// Some contributing model had a degenerate decoder.
    pub collapsed: bool,
    /// Best mean among non-collapsed architectures for this metric: the
    /// lowest for error metrics, the highest otherwise.
    pub best: bool,
}

impl SummaryRow {
    /// `mean±std`, parenthesized for collapsed models. Means below 0.01 in
    /// magnitude switch to scientific notation.
    pub fn cell(&self) -> String {
        let s = if self.mean != 0.0 && self.mean.abs() < 0.01 {
            format!("{:.2e}±{:.1e}", self.mean, self.std)
        } else {
            format!("{:.3}±{:.3}", self.mean, self.std)
        };
        if self.collapsed {
            format!("({s})")
        } else {
            s
        }
    }
}

/// Metrics that measure an error rather than a quality.
pub fn lower_is_better(metric: &str) -> bool {
    metric == "rec"
}

/// Groups rows by architecture label and metric. Failed and non-finite rows
/// are ignored. Labels are `architecture` or `architecture/digest` when one
/// architecture appears with several hyperparameter digests.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut digests: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    rows.iter().for_each(|r| {
        digests.entry(&r.architecture).or_default().insert(&r.digest);
    });
    let label = |r: &MetricRow| {
        if digests[r.architecture.as_str()].len() > 1 {
            format!("{}/{}", r.architecture, r.digest)
        } else {
            r.architecture.clone()
        }
    };
    let mut groups: BTreeMap<(String, String), (Vec<f64>, bool)> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.has_flag("failed") && r.value.is_finite()) {
        let g = groups.entry((label(r), r.metric.clone())).or_default();
        g.0.push(r.value);
        g.1 |= r.has_flag("collapsed");
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((architecture, metric), (vals, collapsed))| {
            let (mean, std) = mean_std(&vals);
            SummaryRow { architecture, metric, mean, std, runs: vals.len(), collapsed, best: false }
        })
        .collect();
    let mut best: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for (i, s) in out.iter().enumerate().filter(|(_, s)| !s.collapsed) {
        let e = best.entry(s.metric.clone()).or_insert((i, s.mean));
        let better = if lower_is_better(&s.metric) { s.mean < e.1 } else { s.mean > e.1 };
        if better {
            *e = (i, s.mean);
        }
    }
    best.values().for_each(|&(i, _)| out[i].best = true);
    out
}

/// Plain-text table with one line per architecture and one column per metric.
pub fn summary_table(summary: &[SummaryRow]) -> String {
    let metrics: Vec<&str> = summary.iter().map(|s| s.metric.as_str()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let archs: Vec<&str> = summary.iter().map(|s| s.architecture.as_str()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut t = format!("{:<24}", "architecture");
    metrics.iter().for_each(|m| {
        let _ = write!(t, "{m:>18}");
    });
    t.push('\n');
    for a in archs {
        let _ = write!(t, "{a:<24}");
        for m in &metrics {
            let cell = summary
                .iter()
                .find(|s| s.architecture == a && s.metric == *m)
                .map_or("-".to_string(), |s| if s.best { format!("*{}", s.cell()) } else { s.cell() });
            let _ = write!(t, "{cell:>18}");
        }
        t.push('\n');
    }
    t
}
