//! Hand-built latent models with known disentanglement.
//!
//! The factor oracles encode an observation to its normalized factor values
//! (with a vanishing posterior variance) and decode by snapping each
//! coordinate back onto the factor grid and rendering the corresponding
//! dataset image. [`NoiseModel`] carries no information at all.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::synthdata::{GroundTruthDataset, ImageShape, ObservationBatch};
use crate::vae::{LatentDistribution, LatentModel};

/// Posterior log-variance of the oracles (standard deviation about 3e-7).
const ORACLE_LOG_VARIANCE: f32 = -30.0;

/// Grid index of a latent coordinate for a factor of cardinality `card`.
///
/// Grid values `i / (card - 1)` map back to `i`; any real value maps to
/// `clamp(floor(z * card), 0, card - 1)`, so a uniform draw on `[0, 1]`
/// lands on every index with equal probability.
pub fn grid_index(z: f32, card: usize) -> usize {
    let i = (f64::from(z) * card as f64).floor();
    if i <= 0.0 || i.is_nan() {
        0
    } else {
        (i as usize).min(card - 1)
    }
}

fn factor_rows(batch: &ObservationBatch, dataset: &GroundTruthDataset) -> Result<Vec<f32>> {
    let factors = batch
        .factors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("oracle encoding needs factor labels".into()))?;
    let space = dataset.space();
    let k = space.num_factors();
    if factors.len() != batch.len() * k {
        return Err(Error::shape(batch.len() * k, factors.len()));
    }
    Ok(factors
        .chunks_exact(k)
        .flat_map(|row| row.iter().zip(space.factors()).map(|(&i, f)| f.values[i] as f32))
        .collect())
}

fn check_shape(batch: &ObservationBatch, dataset: &GroundTruthDataset) -> Result<()> {
    if batch.shape != dataset.shape() {
        return Err(Error::shape(dataset.shape(), batch.shape));
    }
    Ok(())
}

/// One latent per factor holding its normalized value; the decoder is the
/// dataset renderer.
#[derive(Debug, Clone, Copy)]
pub struct FactorOracle<'a> {
    dataset: &'a GroundTruthDataset,
}

impl<'a> FactorOracle<'a> {
    pub fn new(dataset: &'a GroundTruthDataset) -> Self {
        FactorOracle { dataset }
    }

    fn tuple(&self, z: &[f32]) -> Vec<usize> {
        z.iter().zip(self.dataset.space().cardinalities()).map(|(&v, c)| grid_index(v, c)).collect()
    }
}

impl LatentModel for FactorOracle<'_> {
    fn z_dim(&self) -> usize {
        self.dataset.space().num_factors()
    }

    fn image_shape(&self) -> ImageShape {
        self.dataset.shape()
    }

    fn encode_batch(&self, batch: &ObservationBatch) -> Result<LatentDistribution> {
        check_shape(batch, self.dataset)?;
        let mean = factor_rows(batch, self.dataset)?;
        let log_variance = vec![ORACLE_LOG_VARIANCE; mean.len()];
        LatentDistribution::new(self.z_dim(), mean, log_variance)
    }

    fn decode_latents(&self, z: &[f32], n: usize) -> Result<Vec<f32>> {
        let d = self.z_dim();
        if z.len() != n * d {
            return Err(Error::shape(n * d, z.len()));
        }
        let mut out = Vec::with_capacity(n * self.dataset.shape().len());
        for row in z.chunks_exact(d) {
            out.extend_from_slice(self.dataset.render(&self.tuple(row))?);
        }
        Ok(out)
    }
}

/// Like [`FactorOracle`] with one factor stored twice. Codes whose two copies
/// disagree decode to the pixelwise maximum of both renderings, an image
/// with two sprites that never occurs in the data.
#[derive(Debug, Clone, Copy)]
pub struct DuplicatedFactorOracle<'a> {
    base: FactorOracle<'a>,
    duplicated: usize,
}

impl<'a> DuplicatedFactorOracle<'a> {
    pub fn new(dataset: &'a GroundTruthDataset, duplicated: usize) -> Result<Self> {
        let k = dataset.space().num_factors();
        if duplicated >= k {
            return Err(Error::InvalidArgument(format!("factor index {duplicated} out of range (have {k})")));
        }
        Ok(DuplicatedFactorOracle { base: FactorOracle::new(dataset), duplicated })
    }

    /// Duplicates the factor named `name`.
    pub fn by_name(dataset: &'a GroundTruthDataset, name: &str) -> Result<Self> {
        let k = dataset
            .space()
            .factors()
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no factor named `{name}`")))?;
        Self::new(dataset, k)
    }
}

impl LatentModel for DuplicatedFactorOracle<'_> {
    fn z_dim(&self) -> usize {
        self.base.z_dim() + 1
    }

    fn image_shape(&self) -> ImageShape {
        self.base.image_shape()
    }

    fn encode_batch(&self, batch: &ObservationBatch) -> Result<LatentDistribution> {
        let inner = self.base.encode_batch(batch)?;
        let k = inner.z_dim;
        let mut mean = Vec::with_capacity(inner.mean.len() + batch.len());
        for row in inner.mean.chunks_exact(k) {
            mean.extend_from_slice(row);
            mean.push(row[self.duplicated]);
        }
        let log_variance = vec![ORACLE_LOG_VARIANCE; mean.len()];
        LatentDistribution::new(k + 1, mean, log_variance)
    }

    fn decode_latents(&self, z: &[f32], n: usize) -> Result<Vec<f32>> {
        let d = self.z_dim();
        if z.len() != n * d {
            return Err(Error::shape(n * d, z.len()));
        }
        let dataset = self.base.dataset;
        let card = dataset.space().cardinalities()[self.duplicated];
        let mut out = Vec::with_capacity(n * dataset.shape().len());
        for row in z.chunks_exact(d) {
            let mut tuple = self.base.tuple(&row[..d - 1]);
            let first = dataset.render(&tuple)?;
            let copy = grid_index(row[d - 1], card);
            if copy == tuple[self.duplicated] {
                out.extend_from_slice(first);
            } else {
                let start = out.len();
                out.extend_from_slice(first);
                tuple[self.duplicated] = copy;
                let second = dataset.render(&tuple)?;
                out[start..].iter_mut().zip(second).for_each(|(a, &b)| *a = a.max(b));
            }
        }
        Ok(out)
    }
}

/// Encodes every observation to fresh standard-normal noise and decodes
/// any code to a uniformly drawn dataset image.
#[derive(Debug)]
pub struct NoiseModel<'a> {
    dataset: &'a GroundTruthDataset,
    z_dim: usize,
    rng: Mutex<ChaCha8Rng>,
}

impl<'a> NoiseModel<'a> {
    pub fn new(dataset: &'a GroundTruthDataset, z_dim: usize, seed: u64) -> Result<Self> {
        if z_dim == 0 {
            return Err(Error::InvalidArgument("noise model needs at least one latent".into()));
        }
        Ok(NoiseModel { dataset, z_dim, rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) })
    }
}

impl LatentModel for NoiseModel<'_> {
    fn z_dim(&self) -> usize {
        self.z_dim
    }

    fn image_shape(&self) -> ImageShape {
        self.dataset.shape()
    }

    fn encode_batch(&self, batch: &ObservationBatch) -> Result<LatentDistribution> {
        check_shape(batch, self.dataset)?;
        let mut rng = self.rng.lock().expect("noise rng poisoned");
        let mean: Vec<f32> = (0..batch.len() * self.z_dim).map(|_| rng.sample(StandardNormal)).collect();
        let log_variance = vec![ORACLE_LOG_VARIANCE; mean.len()];
        LatentDistribution::new(self.z_dim, mean, log_variance)
    }

    fn decode_latents(&self, z: &[f32], n: usize) -> Result<Vec<f32>> {
        if z.len() != n * self.z_dim {
            return Err(Error::shape(n * self.z_dim, z.len()));
        }
        let mut rng = self.rng.lock().expect("noise rng poisoned");
        let mut out = Vec::with_capacity(n * self.dataset.shape().len());
        for _ in 0..n {
            out.extend_from_slice(self.dataset.image_at(rng.random_range(0..self.dataset.len())));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::synthdata::{build_toysprites, sample_random, ToySpritesConfig};

    #[test]
    fn grid_index_inverts_the_normalized_grid() {
        for card in 1..12 {
            for i in 0..card {
                let v = if card == 1 { 0.0 } else { i as f32 / (card - 1) as f32 };
                assert_eq!(grid_index(v, card), i);
            }
            assert_eq!(grid_index(-0.3, card), 0);
            assert_eq!(grid_index(1.7, card), card - 1);
        }
    }

    #[test]
    fn oracles_reconstruct_their_inputs() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_random(&ds, 32, &mut rng).unwrap();
        let clean = FactorOracle::new(&ds);
        let dup = DuplicatedFactorOracle::by_name(&ds, "x_position").unwrap();
        for model in [&clean as &dyn LatentModel, &dup] {
            let dist = model.encode_batch(&batch).unwrap();
            assert_eq!(model.decode_latents(&dist.mean, 32).unwrap(), batch.images);
        }
    }

    #[test]
    fn disagreeing_copies_draw_two_sprites() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let dup = DuplicatedFactorOracle::by_name(&ds, "x_position").unwrap();
        let z = [0.0f32, 0.0, 0.0, 0.5, 0.0, 1.0];
        let img = dup.decode_latents(&z, 1).unwrap();
        let single = ds.render(&[0, 0, 0, 4, 0]).unwrap();
        let mass = |v: &[f32]| v.iter().map(|&p| f64::from(p)).sum::<f64>();
        assert!((mass(&img) - 2.0 * mass(single)).abs() < 1e-3);
    }
}
