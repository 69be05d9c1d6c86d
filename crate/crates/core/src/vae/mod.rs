//! Convolutional VAE: encoder, decoder, discriminator and the analytic loss
//! terms.

pub mod checkpoint;
pub mod loss;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Network, NetworkBuilder, Real, Trace};
use crate::synthdata::{ImageShape, ObservationBatch};

pub use loss::{
    capacity_loss, capacity_loss_grad, kl_divergence, kl_gradient, per_pixel_mse, reconstruction_loss,
    reconstruction_loss_from_logits, KlTerms, PROB_CLIP,
};

const KERNEL: usize = 4;
const STRIDE: usize = 2;

/// Architecture of the encoder/decoder pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub z_dim: usize,
    pub input_shape: ImageShape,
    /// Output channels of the four stride-2 encoder convolutions.
    pub encoder_channels: [usize; 4],
    /// Output channels of the first three decoder up-convolutions; the last
    /// one always produces the image channels.
    pub decoder_channels: [usize; 3],
    pub hidden_units: usize,
}

impl NetworkConfig {
    pub fn new(z_dim: usize, input_shape: ImageShape) -> Self {
        NetworkConfig {
            z_dim,
            input_shape,
            encoder_channels: [32, 32, 64, 64],
            decoder_channels: [64, 64, 64],
            hidden_units: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_dim == 0 {
            return Err(Error::Config("z_dim must be at least 1".into()));
        }
        let s = &self.input_shape;
        if s.height == 0 || s.width == 0 || s.channels == 0 || !s.height.is_multiple_of(16) || !s.width.is_multiple_of(16) {
            return Err(Error::Config(format!("input {s} must have non-zero sides divisible by 16")));
        }
        if self.encoder_channels.contains(&0) || self.decoder_channels.contains(&0) || self.hidden_units == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Spatial side of the bottleneck feature map after four stride-2 stages.
    fn bottleneck_hw(&self) -> (usize, usize) {
        (self.input_shape.height / 16, self.input_shape.width / 16)
    }

    fn conv_ladder(&self, instance_norm: bool) -> NetworkBuilder {
        let s = self.input_shape;
        let mut b = NetworkBuilder::new(s.height, s.width, s.channels);
        for (i, &c) in self.encoder_channels.iter().enumerate() {
            b = b.conv(&format!("conv{i}"), c, KERNEL, STRIDE);
            // normalizing a 1x1 map would zero every activation
            let side = (s.height >> (i + 1)).max(s.width >> (i + 1));
            if instance_norm && side > 1 {
                b = b.instance_norm();
            }
            b = b.relu();
        }
        b.linear("fc0", self.hidden_units).relu()
    }

    pub fn build_encoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Network<T> {
        self.conv_ladder(false).linear("fc1", 2 * self.z_dim).build(rng)
    }

    pub fn build_decoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Network<T> {
        let (h, w) = self.bottleneck_hw();
        let top = self.encoder_channels[3];
        let [c0, c1, c2] = self.decoder_channels;
        NetworkBuilder::new(1, 1, self.z_dim)
            .linear("fc0", self.hidden_units)
            .relu()
            .linear("fc1", h * w * top)
            .relu()
            .reshape(h, w, top)
            .conv_transpose("upconv0", c0, KERNEL, STRIDE)
            .relu()
            .conv_transpose("upconv1", c1, KERNEL, STRIDE)
            .relu()
            .conv_transpose("upconv2", c2, KERNEL, STRIDE)
            .relu()
            .conv_transpose("upconv3", self.input_shape.channels, KERNEL, STRIDE)
            .build(rng)
    }

    /// Encoder ladder with a single-logit head; instance normalization
    /// follows every convolution with a spatial output larger than 1x1 when
    /// `instance_norm` is set.
    pub fn build_discriminator<T: Real, R: Rng + ?Sized>(&self, instance_norm: bool, rng: &mut R) -> Network<T> {
        self.conv_ladder(instance_norm).linear("fc1", 1).build(rng)
    }
}

/// Diagonal Gaussian posteriors for a batch, row-major `n x z_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution<T = f32> {
    pub z_dim: usize,
    pub mean: Vec<T>,
    pub log_variance: Vec<T>,
}

impl<T: Real> LatentDistribution<T> {
    pub fn new(z_dim: usize, mean: Vec<T>, log_variance: Vec<T>) -> Result<Self> {
        if z_dim == 0 || mean.len() != log_variance.len() || !mean.len().is_multiple_of(z_dim) {
            return Err(Error::shape(format!("mean and log-variance of matching n x {z_dim}"), format!("{} / {}", mean.len(), log_variance.len())));
        }
        Ok(LatentDistribution { z_dim, mean, log_variance })
    }

    pub fn len(&self) -> usize {
        self.mean.len() / self.z_dim
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_variance).all(|v| v.is_finite())
    }

    /// Splits a raw encoder head (`[mean | log_variance]` per row).
    fn from_head(z_dim: usize, head: &[T]) -> Self {
        let n = head.len() / (2 * z_dim);
        let mut mean = Vec::with_capacity(n * z_dim);
        let mut log_variance = Vec::with_capacity(n * z_dim);
        for row in head.chunks_exact(2 * z_dim) {
            mean.extend_from_slice(&row[..z_dim]);
            log_variance.extend_from_slice(&row[z_dim..]);
        }
        LatentDistribution { z_dim, mean, log_variance }
    }

    /// Inverse of [`LatentDistribution::from_head`] for gradients.
    fn to_head(z_dim: usize, g_mean: &[T], g_logvar: &[T]) -> Vec<T> {
        let mut head = Vec::with_capacity(2 * g_mean.len());
        for (m, v) in g_mean.chunks_exact(z_dim).zip(g_logvar.chunks_exact(z_dim)) {
            head.extend_from_slice(m);
            head.extend_from_slice(v);
        }
        head
    }
}

/// `z = mean + exp(log_variance / 2) * noise`, elementwise.
pub fn reparameterize<T: Real>(dist: &LatentDistribution<T>, noise: &[T]) -> Result<Vec<T>> {
    if noise.len() != dist.mean.len() {
        return Err(Error::shape(dist.mean.len(), noise.len()));
    }
    let half = T::from_f64_lossy(0.5);
    Ok(dist
        .mean
        .iter()
        .zip(&dist.log_variance)
        .zip(noise)
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect())
}

/// Gradients of a loss with respect to `(mean, log_variance)` given its
/// gradient with respect to a reparameterized sample.
pub fn reparameterize_backward<T: Real>(dist: &LatentDistribution<T>, noise: &[T], grad_z: &[T]) -> (Vec<T>, Vec<T>) {
    let half = T::from_f64_lossy(0.5);
    let g_logvar = dist
        .log_variance
        .iter()
        .zip(noise)
        .zip(grad_z)
        .map(|((&lv, &e), &g)| g * half * (lv * half).exp() * e)
        .collect();
    (grad_z.to_vec(), g_logvar)
}

/// Draws standard normal noise of the given length.
pub fn standard_normal<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<T> {
    use rand_distr::{Distribution, StandardNormal};
    (0..len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(v)
        })
        .collect()
}

/// Encoder/decoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae<T = f32> {
    pub config: NetworkConfig,
    pub encoder: Network<T>,
    pub decoder: Network<T>,
}

/// Images per forward chunk when encoding or decoding large sets.
const INFERENCE_CHUNK: usize = 256;

impl<T: Real> Vae<T> {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = config.build_encoder(rng);
        let decoder = config.build_decoder(rng);
        Ok(Vae { config, encoder, decoder })
    }

    pub fn cast<U: Real>(&self) -> Vae<U> {
        Vae { config: self.config.clone(), encoder: self.encoder.cast(), decoder: self.decoder.cast() }
    }

    fn check_images(&self, images: &[T], n: usize) -> Result<()> {
        let len = self.config.input_shape.len();
        if n == 0 || images.len() != n * len {
            return Err(Error::shape(format!("{n} images of {}", self.config.input_shape), format!("{} values", images.len())));
        }
        Ok(())
    }

    fn check_latents(&self, z: &[T], n: usize) -> Result<()> {
        if n == 0 || z.len() != n * self.config.z_dim {
            return Err(Error::shape(format!("{n} latents of length {}", self.config.z_dim), z.len()));
        }
        Ok(())
    }

    pub fn encode(&self, images: &[T], n: usize) -> Result<LatentDistribution<T>> {
        self.check_images(images, n)?;
        let len = self.config.input_shape.len();
        let mut head = Vec::with_capacity(n * 2 * self.config.z_dim);
        for chunk in images.chunks(INFERENCE_CHUNK * len) {
            head.extend(self.encoder.infer(chunk, chunk.len() / len));
        }
        Ok(LatentDistribution::from_head(self.config.z_dim, &head))
    }

    pub fn encode_traced(&self, images: &[T], n: usize) -> Result<(Trace<T>, LatentDistribution<T>)> {
        self.check_images(images, n)?;
        let trace = self.encoder.forward(images, n);
        let dist = LatentDistribution::from_head(self.config.z_dim, trace.output());
        Ok((trace, dist))
    }

    /// Back-propagates `(d mean, d log_variance)` into encoder parameter gradients.
    pub fn encoder_backward(&self, trace: &Trace<T>, g_mean: &[T], g_logvar: &[T], grads: &mut [T]) {
        let head = LatentDistribution::to_head(self.config.z_dim, g_mean, g_logvar);
        self.encoder.backward(trace, &head, Some(grads), false);
    }

    /// Decoder output before the logistic squashing.
    pub fn decode_logits(&self, z: &[T], n: usize) -> Result<Vec<T>> {
        self.check_latents(z, n)?;
        let d = self.config.z_dim;
        let mut out = Vec::with_capacity(n * self.config.input_shape.len());
        for chunk in z.chunks(INFERENCE_CHUNK * d) {
            out.extend(self.decoder.infer(chunk, chunk.len() / d));
        }
        Ok(out)
    }

    /// Per-pixel Bernoulli means in `[0, 1]`.
    pub fn decode(&self, z: &[T], n: usize) -> Result<Vec<T>> {
        Ok(self.decode_logits(z, n)?.into_iter().map(sigmoid).collect())
    }

    pub fn decode_traced(&self, z: &[T], n: usize) -> Result<Trace<T>> {
        self.check_latents(z, n)?;
        Ok(self.decoder.forward(z, n))
    }
}

/// Anything that maps observations to latent posteriors and latents back to
/// images; implemented by trained VAEs and by hand-built oracles.
pub trait LatentModel {
    fn z_dim(&self) -> usize;

    fn image_shape(&self) -> ImageShape;

    fn encode_batch(&self, batch: &ObservationBatch) -> Result<LatentDistribution>;

    /// Images in `[0, 1]` for `n` latent rows.
    fn decode_latents(&self, z: &[f32], n: usize) -> Result<Vec<f32>>;
}

impl LatentModel for Vae<f32> {
    fn z_dim(&self) -> usize {
        self.config.z_dim
    }

    fn image_shape(&self) -> ImageShape {
        self.config.input_shape
    }

    fn encode_batch(&self, batch: &ObservationBatch) -> Result<LatentDistribution> {
        if batch.shape != self.config.input_shape {
            return Err(Error::shape(self.config.input_shape, batch.shape));
        }
        self.encode(&batch.images, batch.len())
    }

    fn decode_latents(&self, z: &[f32], n: usize) -> Result<Vec<f32>> {
        self.decode(z, n)
    }
}
