//! Histogram mutual information, MIG and DCI disentanglement.

use crate::error::{Error, Result};

/// Latent codes paired with ground-truth factor indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSample {
    /// Row-major `n x d` latent means.
    pub latents: Vec<f64>,
    pub d: usize,
    /// Row-major `n x k` factor indices.
    pub factors: Vec<usize>,
    pub k: usize,
}

impl RepresentationSample {
    pub fn new(latents: Vec<f64>, d: usize, factors: Vec<usize>, k: usize) -> Result<Self> {
        if d == 0 || k == 0 || !latents.len().is_multiple_of(d) || !factors.len().is_multiple_of(k) || latents.len() / d != factors.len() / k {
            return Err(Error::shape(format!("n x {d} latents and n x {k} factors"), format!("{} / {}", latents.len(), factors.len())));
        }
        if latents.len() / d < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        if latents.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite latent values".into()));
        }
        Ok(RepresentationSample { latents, d, factors, k })
    }

    pub fn len(&self) -> usize {
        self.latents.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latent_column(&self, j: usize) -> Vec<f64> {
        self.latents.iter().skip(j).step_by(self.d).copied().collect()
    }

    pub fn factor_column(&self, k: usize) -> Vec<usize> {
        self.factors.iter().skip(k).step_by(self.k).copied().collect()
    }
}

/// Default number of equal-width bins per latent dimension.
pub const DEFAULT_BINS: usize = 20;

/// Equal-width bin index of every value over the observed range; a constant
/// column falls entirely into bin 0.
pub fn discretize(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let width = (hi - lo) / bins as f64;
    values.iter().map(|&v| (((v - lo) / width) as usize).min(bins - 1)).collect()
}

fn counts(labels: &[usize]) -> Vec<f64> {
    let m = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut c = vec![0.0; m];
    labels.iter().for_each(|&l| c[l] += 1.0);
    c
}

/// Empirical entropy in nats.
pub fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    counts(labels).iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// Plug-in mutual information of two discrete label sequences, in nats.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired labels");
    let n = a.len() as f64;
    let (ca, cb) = (counts(a), counts(b));
    let nb = cb.len();
    let mut joint = vec![0.0; ca.len() * nb];
    a.iter().zip(b).for_each(|(&x, &y)| joint[x * nb + y] += 1.0);
    let mut mi = 0.0;
    for (x, &px) in ca.iter().enumerate() {
        for (y, &py) in cb.iter().enumerate() {
            let c = joint[x * nb + y];
            if c > 0.0 {
                mi += c / n * (c * n / (px * py)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// `I(z_j; v_k)` for every latent `j` (rows) and factor `k` (columns).
pub fn mutual_information_matrix(sample: &RepresentationSample, bins: usize) -> Vec<Vec<f64>> {
    let factors: Vec<Vec<usize>> = (0..sample.k).map(|k| sample.factor_column(k)).collect();
    (0..sample.d)
        .map(|j| {
            let z = discretize(&sample.latent_column(j), bins);
            factors.iter().map(|v| mutual_information(&z, v)).collect()
        })
        .collect()
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    Ok(())
}

/// Mutual information gap averaged over factors with non-zero entropy.
pub fn mig(sample: &RepresentationSample, bins: usize) -> Result<f64> {
    check_bins(bins)?;
    let mi = mutual_information_matrix(sample, bins);
    let mut gaps = Vec::new();
    for k in 0..sample.k {
        let h = entropy(&sample.factor_column(k));
        if h <= 0.0 {
            log::warn!("factor {k} takes a single value in the sample; skipped in MIG");
            continue;
        }
        let mut col: Vec<f64> = mi.iter().map(|row| row[k]).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        let second = col.get(1).copied().unwrap_or(0.0);
        gaps.push(((col[0] - second) / h).clamp(0.0, 1.0));
    }
    if gaps.is_empty() {
        return Err(Error::InvalidArgument("every factor is constant in the sample".into()));
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Latent-by-factor importance: mutual information normalized by the factor
/// entropy (zero for constant factors).
pub fn importance_matrix(sample: &RepresentationSample, bins: usize) -> Result<Vec<Vec<f64>>> {
    check_bins(bins)?;
    let h: Vec<f64> = (0..sample.k).map(|k| entropy(&sample.factor_column(k))).collect();
    Ok(mutual_information_matrix(sample, bins)
        .into_iter()
        .map(|row| row.iter().zip(&h).map(|(&m, &hk)| if hk > 0.0 { m / hk } else { 0.0 }).collect())
        .collect())
}

/// Rows whose total importance falls below this are ignored.
pub const DCI_MIN_ROW_SUM: f64 = 1e-6;

/// Importance-weighted mean of `1 - H_K(row)` over latent rows.
pub fn dci_from_importance(r: &[Vec<f64>]) -> Result<f64> {
    let k = r.first().map_or(0, Vec::len);
    if k == 0 || r.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidArgument("importance matrix must be rectangular and non-empty".into()));
    }
    if r.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("importance entries must be finite and non-negative".into()));
    }
    let rows: Vec<(f64, &Vec<f64>)> =
        r.iter().map(|row| (row.iter().sum::<f64>(), row)).filter(|(s, _)| *s >= DCI_MIN_ROW_SUM).collect();
    let total: f64 = rows.iter().map(|(s, _)| s).sum();
    if rows.is_empty() || total <= 0.0 {
        return Err(Error::InvalidArgument("importance matrix is all zero".into()));
    }
    let mut score = 0.0;
    for (s, row) in rows {
        let d_j = if k == 1 {
            1.0
        } else {
            let h: f64 = row.iter().map(|&v| v / s).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
            1.0 - h / (k as f64).ln()
        };
        score += s / total * d_j;
    }
    Ok(score.clamp(0.0, 1.0))
}

pub fn dci_disentanglement(sample: &RepresentationSample, bins: usize) -> Result<f64> {
    dci_from_importance(&importance_matrix(sample, bins)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dci_extremes() {
        let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!((dci_from_importance(&eye).unwrap() - 1.0).abs() < 1e-12);
        let uniform = vec![vec![0.5, 0.5, 0.5], vec![0.0; 3]];
        assert!(dci_from_importance(&uniform).unwrap().abs() < 1e-12);
        assert!(dci_from_importance(&[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn duplicate_latents_have_zero_gap() {
        let f: Vec<usize> = (0..400).map(|i| i % 4).collect();
        let lat: Vec<f64> = f.iter().flat_map(|&v| [v as f64, v as f64]).collect();
        let s = RepresentationSample::new(lat, 2, f, 1).unwrap();
        assert!(mig(&s, 20).unwrap().abs() < 1e-12);
    }

    #[test]
    fn information_identities() {
        let a: Vec<usize> = (0..1000).map(|i| i % 5).collect();
        assert!((mutual_information(&a, &a) - entropy(&a)).abs() < 1e-12);
        assert!((entropy(&a) - 5f64.ln()).abs() < 1e-12);
        let b: Vec<usize> = (0..1000).map(|i| (i / 5) % 2).collect();
        assert!(mutual_information(&a, &b).abs() < 1e-12);
    }

    #[test]
    fn discretize_covers_the_range() {
        let v = [0.0, 0.5, 1.0, 0.999];
        assert_eq!(discretize(&v, 2), vec![0, 1, 1, 1]);
        assert_eq!(discretize(&[3.0, 3.0], 20), vec![0, 0]);
    }
}
