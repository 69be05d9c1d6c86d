//! Reconstruction, KL and capacity terms.
//!
//! Batch-level values are sums over pixels (or latent dimensions) averaged
//! over the batch. Gradient helpers return the gradient of that batch mean.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Real};

use super::LatentDistribution;

/// Probabilities entering the cross-entropy are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-6;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn check_pair<T: Real>(x: &[T], x_hat: &[T], n: usize) -> Result<()> {
    if x.len() != x_hat.len() || n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::shape(x.len(), x_hat.len()));
    }
    Ok(())
}

/// Bernoulli cross-entropy summed over pixels, averaged over `n` samples (nats).
pub fn reconstruction_loss<T: Real>(x: &[T], x_hat: &[T], n: usize) -> Result<f64> {
    check_pair(x, x_hat, n)?;
    let mut total = 0.0;
    for (&a, &b) in x.iter().zip(x_hat) {
        let (a, b) = (a.to_f64().unwrap(), b.to_f64().unwrap());
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidArgument(format!("reconstruction inputs must lie in [0, 1], got {a} / {b}")));
        }
        let p = clip(b);
        total -= a * p.ln() + (1.0 - a) * (1.0 - p).ln();
    }
    Ok(total / n as f64)
}

/// Cross-entropy of `sigmoid(logits)` against `x`, with the decoder means and
/// the gradient of the batch-mean loss with respect to the logits.
pub fn reconstruction_loss_from_logits<T: Real>(x: &[T], logits: &[T], n: usize) -> Result<(f64, Vec<T>, Vec<T>)> {
    check_pair(x, logits, n)?;
    let probs: Vec<T> = logits.iter().map(|&l| sigmoid(l)).collect();
    let loss = reconstruction_loss(x, &probs, n)?;
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let (lo, hi) = (T::from_f64_lossy(PROB_CLIP), T::from_f64_lossy(1.0 - PROB_CLIP));
    let grad = probs
        .iter()
        .zip(x)
        .map(|(&p, &a)| if p > lo && p < hi { (p - a) * inv_n } else { T::zero() })
        .collect();
    Ok((loss, probs, grad))
}

/// Mean squared error per pixel (the reported "Rec" statistic).
pub fn per_pixel_mse<T: Real>(x: &[T], x_hat: &[T]) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::shape(x.len(), x_hat.len()));
    }
    let sum: f64 = x.iter().zip(x_hat).map(|(&a, &b)| (a.to_f64().unwrap() - b.to_f64().unwrap()).powi(2)).sum();
    Ok(sum / x.len() as f64)
}

/// KL divergence of diagonal Gaussian posteriors from `N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTerms {
    /// Batch-mean KL of each latent dimension.
    pub per_dim: Vec<f64>,
    /// Sum of `per_dim`, i.e. the batch-mean total KL.
    pub total: f64,
}

pub fn kl_divergence<T: Real>(dist: &LatentDistribution<T>) -> Result<KlTerms> {
    if !dist.is_finite() {
        return Err(Error::InvalidArgument("non-finite posterior parameters".into()));
    }
    if dist.is_empty() {
        return Err(Error::InvalidArgument("empty posterior batch".into()));
    }
    let d = dist.z_dim;
    let n = dist.len();
    let mut per_dim = vec![0.0; d];
    for (i, (&m, &lv)) in dist.mean.iter().zip(&dist.log_variance).enumerate() {
        let (m, lv) = (m.to_f64().unwrap(), lv.to_f64().unwrap());
        per_dim[i % d] += 0.5 * (m * m + lv.exp() - lv - 1.0);
    }
    per_dim.iter_mut().for_each(|v| *v /= n as f64);
    let total = per_dim.iter().sum();
    Ok(KlTerms { per_dim, total })
}

/// Gradient of the batch-mean total KL with respect to `(mean, log_variance)`.
pub fn kl_gradient<T: Real>(dist: &LatentDistribution<T>) -> (Vec<T>, Vec<T>) {
    let inv_n = T::one() / T::from_usize(dist.len().max(1)).unwrap();
    let half = T::from_f64_lossy(0.5);
    let g_mean = dist.mean.iter().map(|&m| m * inv_n).collect();
    let g_logvar = dist.log_variance.iter().map(|&lv| half * (lv.exp() - T::one()) * inv_n).collect();
    (g_mean, g_logvar)
}

fn check_capacity(c: f64, exponent: u32) -> Result<()> {
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!("capacity must be non-negative, got {c}")));
    }
    if exponent != 1 && exponent != 4 {
        return Err(Error::InvalidArgument(format!("capacity exponent must be 1 or 4, got {exponent}")));
    }
    Ok(())
}

/// `|kl - c|` for exponent 1, `(kl - c)^4` for exponent 4.
pub fn capacity_loss(kl_total: f64, c: f64, exponent: u32) -> Result<f64> {
    check_capacity(c, exponent)?;
    let d = kl_total - c;
    Ok(if exponent == 1 { d.abs() } else { d.powi(4) })
}

/// Derivative of [`capacity_loss`] with respect to `kl_total` (0 at the kink).
pub fn capacity_loss_grad(kl_total: f64, c: f64, exponent: u32) -> Result<f64> {
    check_capacity(c, exponent)?;
    let d = kl_total - c;
    Ok(if exponent == 1 {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        4.0 * d.powi(3)
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    #[test]
    fn half_images_cost_ln2_per_pixel() {
        let x = vec![0.5f64; 2 * 64];
        let loss = reconstruction_loss(&x, &x, 2).unwrap();
        assert!((loss - 64.0 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn binary_images_are_bounded_by_the_clip() {
        let x: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let loss = reconstruction_loss(&x, &x, 1).unwrap();
        assert!(loss <= 50.0 * -(1.0 - PROB_CLIP).ln() + 1e-12);
    }

    #[test]
    fn reconstruction_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, p) = (3usize, 40usize);
        let x: Vec<f64> = (0..n * p).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let y: Vec<f64> = (0..n * p).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let mut oracle = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..p {
                let (a, b) = (x[i * p + j], y[i * p + j].clamp(1e-6, 1.0 - 1e-6));
                s += -(a * b.ln()) - (1.0 - a) * (1.0 - b).ln();
            }
            oracle += s;
        }
        oracle /= n as f64;
        let loss = reconstruction_loss(&x, &y, n).unwrap();
        assert!(((loss - oracle) / oracle).abs() < 1e-6);
    }

    #[test]
    fn reconstruction_rejects_out_of_range() {
        assert!(reconstruction_loss(&[1.5f64], &[0.5], 1).is_err());
        assert!(reconstruction_loss(&[0.5f64], &[0.5, 0.2], 1).is_err());
    }

    #[test]
    fn kl_analytic_values() {
        let zero = LatentDistribution::new(1, vec![0.0f64], vec![0.0]).unwrap();
        assert_eq!(kl_divergence(&zero).unwrap().total, 0.0);
        let one = LatentDistribution::new(1, vec![1.0f64], vec![0.0]).unwrap();
        assert!((kl_divergence(&one).unwrap().total - 0.5).abs() < 1e-12);
        let bad = LatentDistribution::new(1, vec![f64::NAN], vec![0.0]).unwrap();
        assert!(kl_divergence(&bad).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(mu, sigma) in &[(0.7f64, 0.5f64), (-1.4, 1.8), (0.1, 0.2)] {
            let analytic = kl_divergence(&LatentDistribution::new(1, vec![mu], vec![(sigma * sigma).ln()]).unwrap())
                .unwrap()
                .total;
            let q = Normal::new(mu, sigma).unwrap();
            let draws = 200_000;
            let mut acc = 0.0;
            for _ in 0..draws {
                let z = q.sample(&mut rng);
                let log_q = -0.5 * ((z - mu) / sigma).powi(2) - sigma.ln();
                let log_p = -0.5 * z * z;
                acc += log_q - log_p;
            }
            assert!((acc / draws as f64 - analytic).abs() < 1e-2);
        }
    }

    #[test]
    fn capacity_loss_values() {
        assert_eq!(capacity_loss(3.0, 3.0, 1).unwrap(), 0.0);
        assert_eq!(capacity_loss(3.0, 3.0, 4).unwrap(), 0.0);
        assert!((capacity_loss(1.1, 1.0, 4).unwrap() - 1e-4).abs() < 1e-15);
        assert_eq!(capacity_loss(1.0, 3.0, 1).unwrap(), 2.0);
        assert!(capacity_loss(1.0, -0.1, 1).is_err());
        assert!(capacity_loss(1.0, 0.0, 2).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(mu in -5.0f64..5.0, lv in -6.0f64..4.0) {
            let kl = kl_divergence(&LatentDistribution::new(1, vec![mu], vec![lv]).unwrap()).unwrap().total;
            prop_assert!(kl >= 0.0);
            if mu.abs() > 1e-3 || lv.abs() > 1e-3 {
                prop_assert!(kl > 1e-9);
            }
        }

        #[test]
        fn capacity_loss_is_symmetric(c in 0.0f64..50.0, delta in 0.0f64..10.0) {
            let lo = (c - delta).max(0.0);
            let delta = c - lo;
            for e in [1, 4] {
                let up = capacity_loss(c + delta, c, e).unwrap();
                let down = capacity_loss(c - delta, c, e).unwrap();
                prop_assert!((up - down).abs() <= 1e-9 * up.max(1.0));
            }
        }
    }
}
