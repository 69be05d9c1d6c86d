//! Fixed-factor variance vote classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::{sample_fixed_factor, sample_random, GroundTruthDataset};
use crate::vae::LatentModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FvaeConfig {
    pub votes: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    /// Observations used to estimate each latent's global scale.
    pub scale_samples: usize,
}

impl Default for FvaeConfig {
    fn default() -> Self {
        FvaeConfig { votes: 800, batch_size: 64, train_fraction: 0.8, scale_samples: 10_000 }
    }
}

/// Latent dimensions whose global variance is below this are ignored.
pub const COLLAPSED_VARIANCE: f64 = 1e-6;

/// A single vote: the least varying latent and the fixed factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub dim: usize,
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvaeResult {
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub active_dims: Vec<usize>,
}

/// Fits `dim -> factor` by majority over `train` (ties and unseen dims go to
/// the lowest factor index) and returns (train, test) accuracy.
pub fn majority_vote_accuracy(train: &[Vote], test: &[Vote], num_dims: usize, num_factors: usize) -> (f64, f64) {
    let mut counts = vec![vec![0usize; num_factors]; num_dims];
    train.iter().for_each(|v| counts[v.dim][v.factor] += 1);
    let table: Vec<usize> = counts
        .iter()
        .map(|row| row.iter().enumerate().fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best }).0)
        .collect();
    let acc = |votes: &[Vote]| {
        if votes.is_empty() {
            return 0.0;
        }
        votes.iter().filter(|v| table[v.dim] == v.factor).count() as f64 / votes.len() as f64
    };
    (acc(train), acc(test))
}

fn variances(rows: &[f32], d: usize) -> Vec<f64> {
    let n = (rows.len() / d) as f64;
    let mut mean = vec![0.0; d];
    rows.chunks_exact(d).for_each(|r| r.iter().zip(&mut mean).for_each(|(&v, m)| *m += f64::from(v) / n));
    let mut var = vec![0.0; d];
    rows.chunks_exact(d)
        .for_each(|r| r.iter().zip(&mean).zip(&mut var).for_each(|((&v, m), s)| *s += (f64::from(v) - m).powi(2) / n));
    var
}

pub fn fvae_metric(model: &dyn LatentModel, dataset: &GroundTruthDataset, config: &FvaeConfig, seed: u64) -> Result<FvaeResult> {
    if config.votes < 2 || config.batch_size < 2 || !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config("fvae metric needs >= 2 votes, batch >= 2 and a train fraction in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.z_dim();
    let k = dataset.space().num_factors();

    let mut scale_codes = Vec::with_capacity(config.scale_samples * d);
    let mut left = config.scale_samples.max(2);
    while left > 0 {
        let m = left.min(256);
        scale_codes.extend(model.encode_batch(&sample_random(dataset, m, &mut rng)?)?.mean);
        left -= m;
    }
    let global = variances(&scale_codes, d);
    let active: Vec<usize> = (0..d).filter(|&j| global[j] >= COLLAPSED_VARIANCE).collect();
    if active.is_empty() {
        return Err(Error::InvalidArgument("every latent dimension is collapsed".into()));
    }

    let mut votes = Vec::with_capacity(config.votes);
    for _ in 0..config.votes {
        let factor = rng.random_range(0..k);
        let batch = sample_fixed_factor(dataset, factor, config.batch_size, &mut rng)?;
        let codes = model.encode_batch(&batch)?.mean;
        let local = variances(&codes, d);
        let dim = *active
            .iter()
            .min_by(|&&a, &&b| (local[a] / global[a]).total_cmp(&(local[b] / global[b])))
            .expect("non-empty");
        votes.push(Vote { dim, factor });
    }
    let n_train = ((config.votes as f64) * config.train_fraction).round() as usize;
    let (train, test) = votes.split_at(n_train.clamp(1, config.votes - 1));
    let (train_accuracy, accuracy) = majority_vote_accuracy(train, test, d, k);
    Ok(FvaeResult { accuracy, train_accuracy, active_dims: active })
}
