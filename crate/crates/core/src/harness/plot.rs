//! Capacity trajectories: mean and spread across seeds, drawn as SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Mean and sample standard deviation of `C` at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

/// Per-step mean and sample standard deviation over runs; only steps present
/// in every run are kept. A single run has zero spread.
pub fn capacity_band(trajectories: &[Vec<(u64, f64)>]) -> Result<Vec<BandPoint>> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let mut at: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for t in trajectories {
        for &(s, c) in t {
            at.entry(s).or_default().push(c);
        }
    }
    Ok(at
        .into_iter()
        .filter(|(_, v)| v.len() == trajectories.len())
        .map(|(step, v)| {
            let (mean, std) = mean_std(&v);
            BandPoint { step, mean, std }
        })
        .collect())
}

/// Mean and sample standard deviation (zero for one value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line per configuration with a shaded band of one standard deviation.
/// A labelled configuration and the `(step, C)` trajectories of its seeds.
pub type CapacitySeries = (String, Vec<Vec<(u64, f64)>>);

pub fn plot_capacity(series: &[CapacitySeries]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let bands: Vec<(&str, Vec<BandPoint>)> =
        series.iter().map(|(l, t)| Ok((l.as_str(), capacity_band(t)?))).collect::<Result<_>>()?;
    let max_step = bands.iter().flat_map(|(_, b)| b.iter().map(|p| p.step)).max().unwrap_or(1).max(1) as f64;
    let max_c = bands
        .iter()
        .flat_map(|(_, b)| b.iter().map(|p| p.mean + p.std))
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.05;
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 20.0, 30.0, 50.0);
    let sx = |s: u64| left + (w - left - right) * s as f64 / max_step;
    let sy = |c: f64| h - bottom - (h - top - bottom) * c / max_c;

    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{0}\" stroke=\"black\"/>",
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let c = max_c * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{c:.3}</text>", left - 6.0, sy(c) + 4.0);
        let st = (max_step * i as f64 / 4.0) as u64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{st}</text>", sx(st), h - bottom + 18.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">step</text>", (left + w - right) / 2.0, h - 8.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {0})\" text-anchor=\"middle\">C (nats)</text>", h / 2.0);
    for (i, (label, band)) in bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = band.iter().map(|p| format!("{:.2},{:.2}", sx(p.step), sy(p.mean + p.std))).collect();
        let lower: Vec<String> = band.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.step), sy(p.mean - p.std))).collect();
        let _ = writeln!(s, "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>", upper.join(" "), lower.join(" "));
        let line: Vec<String> = band.iter().map(|p| format!("{:.2},{:.2}", sx(p.step), sy(p.mean))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", line.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>", left + 10.0, top + 14.0 * (i as f64 + 1.0));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
