//! Reconstructed (EP) and generated (FP) sample sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::{sample_random, GroundTruthDataset, ObservationBatch};
use crate::train::permute_dims;
use crate::vae::{reparameterize, standard_normal, LatentModel};

/// Observations encoded or decoded per model call.
const CHUNK: usize = 256;

/// How generated samples are drawn from the latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpSampler {
    /// Encode real data, sample codes and shuffle each latent dimension
    /// across the set.
    Permute,
    /// Draw every latent dimension independently and uniformly within its
    /// range on an encoded batch.
    UniformRange,
}

impl FpSampler {
    pub fn as_str(self) -> &'static str {
        match self {
            FpSampler::Permute => "permute",
            FpSampler::UniformRange => "uniform_range",
        }
    }
}

impl std::fmt::Display for FpSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FpSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permute" => Ok(FpSampler::Permute),
            "uniform_range" | "uniform-range" => Ok(FpSampler::UniformRange),
            other => Err(Error::Config(format!("unknown sampler `{other}`"))),
        }
    }
}

fn check_model(model: &dyn LatentModel, dataset: &GroundTruthDataset) -> Result<()> {
    if model.image_shape() != dataset.shape() {
        return Err(Error::shape(model.image_shape(), dataset.shape()));
    }
    Ok(())
}

/// Encodes `n` fresh observations and returns sampled codes `z ~ q(z|x)`.
pub fn sample_posterior_codes<R: Rng + ?Sized>(
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f32>> {
    check_model(model, dataset)?;
    let mut z = Vec::with_capacity(n * model.z_dim());
    let mut left = n;
    while left > 0 {
        let m = left.min(CHUNK);
        let batch = sample_random(dataset, m, rng)?;
        let dist = model.encode_batch(&batch)?;
        if !dist.is_finite() {
            return Err(Error::InvalidArgument("model produced non-finite posterior parameters".into()));
        }
        let noise = standard_normal(dist.mean.len(), rng);
        z.extend(reparameterize(&dist, &noise)?);
        left -= m;
    }
    Ok(z)
}

/// Decodes `n` latent rows in chunks into an observation batch.
pub fn decode_codes(model: &dyn LatentModel, z: &[f32], n: usize) -> Result<ObservationBatch> {
    let d = model.z_dim();
    let mut images = Vec::with_capacity(n * model.image_shape().len());
    for chunk in z.chunks(CHUNK * d) {
        images.extend(model.decode_latents(chunk, chunk.len() / d)?);
    }
    ObservationBatch::new(model.image_shape(), images, None)
}

/// `n` reconstructions of random observations through sampled codes.
pub fn sample_ep<R: Rng + ?Sized>(model: &dyn LatentModel, dataset: &GroundTruthDataset, n: usize, rng: &mut R) -> Result<ObservationBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let z = sample_posterior_codes(model, dataset, n, rng)?;
    decode_codes(model, &z, n)
}

/// `n` decodings of sampled codes whose dimensions were shuffled
/// independently across the set.
pub fn sample_fp_permute<R: Rng + ?Sized>(
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    n: usize,
    rng: &mut R,
) -> Result<ObservationBatch> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("permutation sampling needs at least 2 samples, got {n}")));
    }
    let z = sample_posterior_codes(model, dataset, n, rng)?;
    let z = permute_dims(&z, n, model.z_dim(), rng);
    decode_codes(model, &z, n)
}

/// Observations encoded to estimate latent ranges for [`sample_fp_uniform`].
pub const RANGE_ESTIMATION_SIZE: usize = 2048;

/// Per-dimension `(min, max)` of sampled codes on `count` observations.
pub fn estimate_latent_ranges<R: Rng + ?Sized>(
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(f32, f32)>> {
    if count == 0 {
        return Err(Error::InvalidArgument("range estimation needs at least one observation".into()));
    }
    let d = model.z_dim();
    let z = sample_posterior_codes(model, dataset, count, rng)?;
    let mut ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); d];
    for row in z.chunks_exact(d) {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    Ok(ranges)
}

/// Uniform draws inside `ranges`; a dimension with `min == max` stays at
/// that value.
pub fn sample_uniform_codes<R: Rng + ?Sized>(ranges: &[(f32, f32)], n: usize, rng: &mut R) -> Vec<f32> {
    let mut z = Vec::with_capacity(n * ranges.len());
    for _ in 0..n {
        for &(lo, hi) in ranges {
            z.push(if hi > lo { rng.random_range(lo..=hi) } else { lo });
        }
    }
    z
}

/// `n` decodings of codes drawn uniformly within the estimated latent ranges.
pub fn sample_fp_uniform<R: Rng + ?Sized>(
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    n: usize,
    rng: &mut R,
) -> Result<ObservationBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let ranges = estimate_latent_ranges(model, dataset, RANGE_ESTIMATION_SIZE, rng)?;
    let z = sample_uniform_codes(&ranges, n, rng);
    decode_codes(model, &z, n)
}

pub fn sample_fp<R: Rng + ?Sized>(
    sampler: FpSampler,
    model: &dyn LatentModel,
    dataset: &GroundTruthDataset,
    n: usize,
    rng: &mut R,
) -> Result<ObservationBatch> {
    match sampler {
        FpSampler::Permute => sample_fp_permute(model, dataset, n, rng),
        FpSampler::UniformRange => sample_fp_uniform(model, dataset, n, rng),
    }
}
