//! Loss values and parameter gradients of the three objectives a training
//! step descends. Everything is generic over the element type so the same
//! code is finite-difference checked at `f64`.

use crate::error::Result;
use crate::nn::{sigmoid, softplus, Network, Real, Trace};
use crate::vae::{
    capacity_loss, capacity_loss_grad, kl_divergence, kl_gradient, reconstruction_loss_from_logits, reparameterize,
    reparameterize_backward, KlTerms, LatentDistribution, Vae,
};

/// A traced encode, sample, decode pass.
pub struct VaePass<T> {
    pub n: usize,
    pub encoder_trace: Trace<T>,
    pub posterior: LatentDistribution<T>,
    pub noise: Vec<T>,
    pub z: Vec<T>,
    pub decoder_trace: Trace<T>,
    /// Decoder means `sigmoid(logits)`.
    pub probs: Vec<T>,
}

impl<T: Real> VaePass<T> {
    pub fn run(vae: &Vae<T>, x: &[T], n: usize, noise: Vec<T>) -> Result<Self> {
        let (encoder_trace, posterior) = vae.encode_traced(x, n)?;
        let z = reparameterize(&posterior, &noise)?;
        let decoder_trace = vae.decode_traced(&z, n)?;
        let probs = decoder_trace.output().iter().map(|&l| sigmoid(l)).collect();
        Ok(VaePass { n, encoder_trace, posterior, noise, z, decoder_trace, probs })
    }

    /// Pushes `(d mean, d log_variance)` contributions from a latent-sample
    /// gradient through the encoder.
    fn encoder_from_z(&self, vae: &Vae<T>, grad_z: &[T], extra: Option<(&[T], &[T])>, grads: &mut [T]) {
        let (mut g_mean, mut g_logvar) = reparameterize_backward(&self.posterior, &self.noise, grad_z);
        if let Some((em, ev)) = extra {
            g_mean.iter_mut().zip(em).for_each(|(a, &b)| *a = *a + b);
            g_logvar.iter_mut().zip(ev).for_each(|(a, &b)| *a = *a + b);
        }
        vae.encoder_backward(&self.encoder_trace, &g_mean, &g_logvar, grads);
    }
}

/// Penalty added to the reconstruction term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `beta * KL`.
    Kl { beta: f64 },
    /// `gamma * |KL - C|` (exponent 1) or `gamma * (KL - C)^4` (exponent 4).
    Capacity { gamma: f64, capacity: f64, exponent: u32 },
}

/// Weights of the VAE objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub reconstruction_weight: f64,
    pub regularizer: Regularizer,
}

impl VaeLoss {
    pub fn new(regularizer: Regularizer) -> Self {
        VaeLoss { reconstruction_weight: 1.0, regularizer }
    }
}

#[derive(Debug, Clone)]
pub struct VaeGradients<T> {
    pub reconstruction: f64,
    pub kl: KlTerms,
    /// Unweighted `|KL - C|` or `(KL - C)^4`; zero for the KL regularizer.
    pub capacity_loss: f64,
    pub total: f64,
    pub encoder: Vec<T>,
    pub decoder: Vec<T>,
}

/// Loss value and encoder/decoder gradients of the VAE objective for one
/// batch with fixed reparameterization noise.
pub fn vae_gradients<T: Real>(vae: &Vae<T>, x: &[T], n: usize, noise: Vec<T>, loss: VaeLoss) -> Result<VaeGradients<T>> {
    let pass = VaePass::run(vae, x, n, noise)?;
    let (reconstruction, _, mut g_logits) = reconstruction_loss_from_logits(x, pass.decoder_trace.output(), n)?;
    let w_rec = T::from_f64_lossy(loss.reconstruction_weight);
    g_logits.iter_mut().for_each(|g| *g = *g * w_rec);

    let kl = kl_divergence(&pass.posterior)?;
    let (kl_coef, capacity_value, regularizer_value) = match loss.regularizer {
        Regularizer::Kl { beta } => (beta, 0.0, beta * kl.total),
        Regularizer::Capacity { gamma, capacity, exponent } => {
            let value = capacity_loss(kl.total, capacity, exponent)?;
            (gamma * capacity_loss_grad(kl.total, capacity, exponent)?, value, gamma * value)
        }
    };

    let mut decoder = vec![T::zero(); vae.decoder.num_params()];
    let grad_z = vae
        .decoder
        .backward(&pass.decoder_trace, &g_logits, Some(&mut decoder), true)
        .expect("input gradient requested");
    let (mut kg_mean, mut kg_logvar) = kl_gradient(&pass.posterior);
    let coef = T::from_f64_lossy(kl_coef);
    kg_mean.iter_mut().chain(kg_logvar.iter_mut()).for_each(|g| *g = *g * coef);
    let mut encoder = vec![T::zero(); vae.encoder.num_params()];
    pass.encoder_from_z(vae, &grad_z, Some((&kg_mean, &kg_logvar)), &mut encoder);

    Ok(VaeGradients {
        reconstruction,
        total: loss.reconstruction_weight * reconstruction + regularizer_value,
        kl,
        capacity_loss: capacity_value,
        encoder,
        decoder,
    })
}

/// Smoothed cross-entropy of a discriminator on a mixed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorLoss<T> {
    pub loss: f64,
    /// Fraction classified correctly at probability threshold 0.5; a logit of
    /// exactly zero counts as half correct.
    pub accuracy: f64,
    /// Gradient of `loss` with respect to `[logits_ep | logits_fp]`.
    pub grad_logits: Vec<T>,
}

/// Cross-entropy with reconstructions labelled `1 - eps` and generated
/// samples labelled `eps`, averaged over both sets.
pub fn discriminator_loss<T: Real>(logits_ep: &[T], logits_fp: &[T], eps: f64) -> DiscriminatorLoss<T> {
    let total = logits_ep.len() + logits_fp.len();
    let inv = 1.0 / total.max(1) as f64;
    let mut loss = 0.0;
    let mut correct = 0.0;
    let mut grad_logits = Vec::with_capacity(total);
    for (logits, label, positive) in [(logits_ep, 1.0 - eps, true), (logits_fp, eps, false)] {
        for &l in logits {
            let lf = l.to_f64().unwrap();
            loss += softplus(lf) - label * lf;
            grad_logits.push(T::from_f64_lossy((sigmoid(lf) - label) * inv));
            correct += if lf == 0.0 {
                0.5
            } else if (lf > 0.0) == positive {
                1.0
            } else {
                0.0
            };
        }
    }
    DiscriminatorLoss { loss: loss * inv, accuracy: correct * inv, grad_logits }
}

/// Accuracy and parameter gradient of a discriminator network on a mixed
/// batch of `n` reconstructions and `n` generated images.
pub fn discriminator_gradients<T: Real>(
    net: &Network<T>,
    x_ep: &[T],
    x_fp: &[T],
    n: usize,
    eps: f64,
) -> (DiscriminatorLoss<T>, Vec<T>) {
    let mut mixed = Vec::with_capacity(x_ep.len() + x_fp.len());
    mixed.extend_from_slice(x_ep);
    mixed.extend_from_slice(x_fp);
    let trace = net.forward(&mixed, 2 * n);
    let (ep, fp) = trace.output().split_at(n);
    let loss = discriminator_loss(ep, fp, eps);
    let mut grads = vec![T::zero(); net.num_params()];
    net.backward(&trace, &loss.grad_logits, Some(&mut grads), false);
    (loss, grads)
}

/// Logits of `net` on `x` and, per sample, the gradient of that sample's
/// logit with respect to its own input.
pub fn logit_input_gradients<T: Real>(net: &Network<T>, x: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let trace = net.forward(x, n);
    let ones = vec![T::one(); n];
    let jac = net.backward(&trace, &ones, None, true).expect("input gradient requested");
    (trace.output().to_vec(), jac)
}

#[derive(Debug, Clone)]
pub struct AdversarialGradients<T> {
    /// Batch mean of `log D(x_hat)`.
    pub mean_log_d: f64,
    /// Batch mean of `log(1 - D(x_hat))`.
    pub mean_log_one_minus_d: f64,
    /// Gradient of `w_enc * mean log D(x_hat)` w.r.t. the encoder.
    pub encoder: Vec<T>,
    /// Gradient of `w_dec * mean log(1 - D(x_hat))` w.r.t. the decoder.
    pub decoder: Vec<T>,
}

/// Gradients of the two adversarial terms through a recorded pass, given the
/// discriminator logits on `pass.probs` and their input gradients.
pub fn adversarial_gradients<T: Real>(
    vae: &Vae<T>,
    pass: &VaePass<T>,
    logits: &[T],
    logit_input_grads: &[T],
    w_enc: f64,
    w_dec: f64,
) -> AdversarialGradients<T> {
    let n = pass.n;
    let per = pass.probs.len() / n;
    assert_eq!(logits.len(), n, "one logit per sample");
    assert_eq!(logit_input_grads.len(), pass.probs.len(), "input gradient size");
    let (mut mean_log_d, mut mean_log_1md) = (0.0, 0.0);
    let mut g_enc = vec![T::zero(); pass.probs.len()];
    let mut g_dec = vec![T::zero(); pass.probs.len()];
    for (i, logit) in logits.iter().enumerate() {
        let l = logit.to_f64().unwrap();
        mean_log_d -= softplus(-l) / n as f64;
        mean_log_1md -= softplus(l) / n as f64;
        let s = sigmoid(l);
        // d/dl log sigmoid(l) = 1 - s, d/dl log(1 - sigmoid(l)) = -s
        let ce = T::from_f64_lossy(w_enc * (1.0 - s) / n as f64);
        let cd = T::from_f64_lossy(-w_dec * s / n as f64);
        for j in i * per..(i + 1) * per {
            let p = pass.probs[j];
            let chain = logit_input_grads[j] * p * (T::one() - p);
            g_enc[j] = chain * ce;
            g_dec[j] = chain * cd;
        }
    }
    let grad_z = vae
        .decoder
        .backward(&pass.decoder_trace, &g_enc, None, true)
        .expect("input gradient requested");
    let mut encoder = vec![T::zero(); vae.encoder.num_params()];
    pass.encoder_from_z(vae, &grad_z, None, &mut encoder);
    let mut decoder = vec![T::zero(); vae.decoder.num_params()];
    vae.decoder.backward(&pass.decoder_trace, &g_dec, Some(&mut decoder), false);
    AdversarialGradients { mean_log_d, mean_log_one_minus_d: mean_log_1md, encoder, decoder }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::synthdata::ImageShape;
    use crate::vae::{standard_normal, NetworkConfig};

    #[test]
    fn zero_logits_cost_ln2_at_any_smoothing() {
        for eps in [0.0, 0.1, 0.3] {
            let d = discriminator_loss(&[0.0f64; 4], &[0.0; 4], eps);
            assert!((d.loss - std::f64::consts::LN_2).abs() < 1e-12);
            assert_eq!(d.accuracy, 0.5);
        }
    }

    #[test]
    fn separated_logits_are_perfect() {
        let d = discriminator_loss(&[60.0f64; 3], &[-60.0; 3], 0.0);
        assert!(d.loss < 1e-20);
        assert_eq!(d.accuracy, 1.0);
        let d = discriminator_loss(&[-60.0f64; 3], &[60.0; 3], 0.0);
        assert_eq!(d.accuracy, 0.0);
    }

    #[test]
    fn smoothing_targets_minimize_the_loss() {
        let eps = 0.1f64;
        let logit = ((1.0 - eps) / eps).ln();
        let d = discriminator_loss(&[logit], &[-logit], eps);
        assert!(d.grad_logits.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn adversarial_terms_vanish_with_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = NetworkConfig::new(3, ImageShape { height: 16, width: 16, channels: 1 });
        let vae: Vae<f64> = Vae::new(cfg.clone(), &mut rng).unwrap();
        let disc: Network<f64> = cfg.build_discriminator(true, &mut rng);
        let x: Vec<f64> = (0..2 * 256).map(|_| rng.random()).collect();
        let pass = VaePass::run(&vae, &x, 2, standard_normal(6, &mut rng)).unwrap();
        let (logits, jac) = logit_input_gradients(&disc, &pass.probs, 2);
        let g = adversarial_gradients(&vae, &pass, &logits, &jac, 0.0, 0.0);
        assert!(g.encoder.iter().chain(&g.decoder).all(|&v| v == 0.0));
        assert!(g.mean_log_d < 0.0 && g.mean_log_one_minus_d < 0.0);
    }
}
