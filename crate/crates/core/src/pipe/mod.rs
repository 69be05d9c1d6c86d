//! Discriminator-based measure of how distinguishable reconstructions are
//! from decodings of a factorized latent distribution.

pub mod oracle;
mod samplers;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Network};
use crate::synthdata::{sample_random, GroundTruthDataset, ObservationBatch};
use crate::train::discriminator_loss;
use crate::train::grads::discriminator_gradients;
use crate::vae::{per_pixel_mse, standard_normal, LatentModel, NetworkConfig};

pub use oracle::{grid_index, DuplicatedFactorOracle, FactorOracle, NoiseModel};
pub use samplers::{
    decode_codes, estimate_latent_ranges, sample_ep, sample_fp, sample_fp_permute, sample_fp_uniform,
    sample_posterior_codes, sample_uniform_codes, FpSampler, RANGE_ESTIMATION_SIZE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipeConfig {
    /// Samples per class.
    pub set_size: usize,
    pub train_fraction: f64,
    pub steps: usize,
    /// Mixed minibatch size, half from each class.
    pub batch_size: usize,
    pub fp_sampler: FpSampler,
    pub optimizer: AdamConfig,
    pub instance_norm: bool,
}

impl Default for PipeConfig {
    fn default() -> Self {
        PipeConfig {
            set_size: 12_800,
            train_fraction: 0.9,
            steps: 10_000,
            batch_size: 64,
            fp_sampler: FpSampler::UniformRange,
            optimizer: AdamConfig::default(),
            instance_norm: false,
        }
    }
}

impl PipeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.steps == 0 || self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::Config("steps must be positive and batch_size an even number >= 2".into()));
        }
        let (train, test) = self.split_sizes();
        if train == 0 || test == 0 {
            return Err(Error::Config(format!("set_size {} leaves an empty train or test split", self.set_size)));
        }
        Ok(())
    }

    /// Per-class sizes of the train and test splits.
    pub fn split_sizes(&self) -> (usize, usize) {
        let train = ((self.set_size as f64) * self.train_fraction).round() as usize;
        (train.min(self.set_size), self.set_size - train.min(self.set_size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeResult {
    pub score: f64,
    pub test_accuracy: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub sampler: FpSampler,
    pub seed: u64,
    /// Mean training loss over the last 100 steps.
    pub final_train_loss: f64,
}

/// `2 (1 - accuracy)`; chance accuracy scores 1, perfect separation 0.
pub fn pipe_score(test_accuracy: f64) -> f64 {
    2.0 * (1.0 - test_accuracy)
}

/// Both sample sets of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSets {
    pub s_ep: ObservationBatch,
    pub s_fp: ObservationBatch,
    pub sampler: FpSampler,
}

pub fn sample_sets<R: Rng + ?Sized>(
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    n: usize,
    sampler: FpSampler,
    rng: &mut R,
) -> Result<SampleSets> {
    let s_ep = sample_ep(model, dataset, n, rng)?;
    let s_fp = sample_fp(sampler, model, dataset, n, rng)?;
    Ok(SampleSets { s_ep, s_fp, sampler })
}

fn gather(batch: &ObservationBatch, idx: &[usize], out: &mut Vec<f32>) {
    for &i in idx {
        out.extend_from_slice(batch.image(i));
    }
}

/// Trains a fresh discriminator to tell the two sets apart and scores its
/// held-out accuracy.
pub fn pipe(model: &dyn LatentModel, dataset: &GroundTruthDataset, config: &PipeConfig, seed: u64) -> Result<PipeResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = sample_sets(model, dataset, config.set_size, config.fp_sampler, &mut rng)?;
    let (n_train, n_test) = config.split_sizes();

    let mut ep_idx: Vec<usize> = (0..config.set_size).collect();
    let mut fp_idx = ep_idx.clone();
    ep_idx.shuffle(&mut rng);
    fp_idx.shuffle(&mut rng);
    let (ep_train, ep_test) = ep_idx.split_at(n_train);
    let (fp_train, fp_test) = fp_idx.split_at(n_train);

    let arch = NetworkConfig::new(1, dataset.shape());
    let mut net: Network<f32> = arch.build_discriminator(config.instance_norm, &mut rng);
    let mut opt = Adam::new(config.optimizer, net.num_params());
    let half = config.batch_size / 2;
    let mut recent = std::collections::VecDeque::with_capacity(100);
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for _ in 0..config.steps {
        let pick = |pool: &[usize], rng: &mut ChaCha8Rng| (0..half).map(|_| pool[rng.random_range(0..pool.len())]).collect::<Vec<_>>();
        let a = pick(ep_train, &mut rng);
        let b = pick(fp_train, &mut rng);
        xa.clear();
        xb.clear();
        gather(&sets.s_ep, &a, &mut xa);
        gather(&sets.s_fp, &b, &mut xb);
        let (loss, grads) = discriminator_gradients(&net, &xa, &xb, half, 0.0);
        if !loss.loss.is_finite() {
            return Err(Error::InvalidArgument(format!("metric discriminator loss became non-finite ({})", loss.loss)));
        }
        opt.step(&mut net.params, &grads);
        if recent.len() == 100 {
            recent.pop_front();
        }
        recent.push_back(loss.loss);
    }

    let logits = |batch: &ObservationBatch, idx: &[usize]| {
        let mut out = Vec::with_capacity(idx.len());
        let mut buf = Vec::new();
        for chunk in idx.chunks(256) {
            buf.clear();
            gather(batch, chunk, &mut buf);
            out.extend(net.infer(&buf, chunk.len()));
        }
        out
    };
    let test = discriminator_loss(&logits(&sets.s_ep, ep_test), &logits(&sets.s_fp, fp_test), 0.0);
    Ok(PipeResult {
        score: pipe_score(test.accuracy),
        test_accuracy: test.accuracy,
        train_per_class: n_train,
        test_per_class: n_test,
        sampler: config.fp_sampler,
        seed,
        final_train_loss: recent.iter().sum::<f64>() / recent.len().max(1) as f64,
    })
}

/// `pipe_score - alpha * rec_norm` where `rec_norm` is `rec` min-max
/// normalized over the population of reconstruction errors.
pub fn pipe_rec(pipe_score: f64, rec: f64, population: &[f64], alpha: f64) -> Result<f64> {
    if population.is_empty() {
        return Err(Error::InvalidArgument("empty reconstruction population".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
    }
    let lo = population.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = population.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = if hi > lo { (rec - lo) / (hi - lo) } else { 0.0 };
    Ok(pipe_score - alpha * norm)
}

/// Latent draws used by [`is_collapsed`].
pub const COLLAPSE_DRAWS: usize = 64;
pub const COLLAPSE_THRESHOLD: f64 = 1e-8;

/// Mean per-pixel variance of decodings of `draws` standard-normal codes.
pub fn decoder_output_variance(model: &dyn LatentModel, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = standard_normal(draws * model.z_dim(), &mut rng);
    let images = model.decode_latents(&z, draws)?;
    let p = model.image_shape().len();
    let mut total = 0.0;
    for j in 0..p {
        let vals = (0..draws).map(|i| f64::from(images[i * p + j]));
        let mean = vals.clone().sum::<f64>() / draws as f64;
        total += vals.map(|v| (v - mean).powi(2)).sum::<f64>() / draws as f64;
    }
    Ok(total / p as f64)
}

/// Whether the decoder ignores its input.
pub fn is_collapsed(model: &dyn LatentModel, seed: u64) -> Result<bool> {
    Ok(decoder_output_variance(model, COLLAPSE_DRAWS, seed)? < COLLAPSE_THRESHOLD)
}

/// Per-pixel mean squared error of posterior-mean reconstructions on `n`
/// random observations.
pub fn reconstruction_error(model: &dyn LatentModel, dataset: &GroundTruthDataset, n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut left = n;
    while left > 0 {
        let m = left.min(256);
        let batch = sample_random(dataset, m, &mut rng)?;
        let dist = model.encode_batch(&batch)?;
        let recon = model.decode_latents(&dist.mean, m)?;
        sum += per_pixel_mse(&batch.images, &recon)? * m as f64;
        left -= m;
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{build_toysprites, ToySpritesConfig};

    #[test]
    fn score_formula() {
        assert_eq!(pipe_score(0.5), 1.0);
        assert_eq!(pipe_score(1.0), 0.0);
        assert!((pipe_score(0.45) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn pipe_rec_endpoints() {
        let pop = [0.01, 0.02, 0.05];
        assert_eq!(pipe_rec(0.8, 0.02, &pop, 0.0).unwrap(), 0.8);
        assert_eq!(pipe_rec(0.8, 0.01, &pop, 1.0).unwrap(), 0.8);
        assert!((pipe_rec(0.8, 0.05, &pop, 1.0).unwrap() - (0.8 - 1.0)).abs() < 1e-12);
        assert_eq!(pipe_rec(0.8, 0.3, &[0.3, 0.3], 1.0).unwrap(), 0.8);
        assert!(pipe_rec(0.8, 0.3, &[], 1.0).is_err());
    }

    #[test]
    fn split_sizes_are_balanced() {
        let cfg = PipeConfig::default();
        assert_eq!(cfg.split_sizes(), (11_520, 1_280));
        assert!(PipeConfig { train_fraction: 1.0, ..cfg.clone() }.validate().is_err());
        assert!(PipeConfig { batch_size: 3, ..cfg }.validate().is_err());
    }

    #[test]
    fn oracle_decoders_are_not_collapsed_and_reconstruct_exactly() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let oracle = FactorOracle::new(&ds);
        assert!(!is_collapsed(&oracle, 0).unwrap());
        assert_eq!(reconstruction_error(&oracle, &ds, 300, 1).unwrap(), 0.0);
    }

    #[test]
    fn small_pipe_run_is_deterministic() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let oracle = FactorOracle::new(&ds);
        let cfg = PipeConfig { set_size: 64, steps: 3, batch_size: 8, ..Default::default() };
        let a = pipe(&oracle, &ds, &cfg, 9).unwrap();
        let b = pipe(&oracle, &ds, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.score, 2.0 * (1.0 - a.test_accuracy));
        assert_eq!((a.train_per_class, a.test_per_class), (58, 6));
    }
}
