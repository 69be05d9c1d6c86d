use rand::Rng;

use crate::error::Result;
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Network};
use crate::vae::NetworkConfig;

use super::grads::{discriminator_gradients, logit_input_gradients};

/// Outcome of one discriminator assessment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdversaryStep {
    /// Accuracy of the discriminator before its update.
    pub accuracy: f64,
    pub loss: f64,
    pub grad_norm_before: f64,
    pub grad_norm_after: f64,
}

/// The component that tells reconstructions apart from generated samples.
pub trait Adversary {
    /// Scores the mixed batch with the current weights, then updates.
    fn assess_and_update(&mut self, x_hat: &[f32], x_tilde: &[f32], n: usize) -> Result<AdversaryStep>;

    /// Logits on `x_hat` and the per-sample gradient of each logit with
    /// respect to its input image.
    fn logit_input_gradients(&self, x_hat: &[f32], n: usize) -> (Vec<f32>, Vec<f32>);
}

/// Convolutional discriminator with its own optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub network: Network<f32>,
    pub optimizer: Adam,
    pub label_smoothing: f64,
    pub max_grad_norm: f64,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        arch: &NetworkConfig,
        instance_norm: bool,
        optimizer: AdamConfig,
        label_smoothing: f64,
        max_grad_norm: f64,
        rng: &mut R,
    ) -> Self {
        let network = arch.build_discriminator(instance_norm, rng);
        let optimizer = Adam::new(optimizer, network.num_params());
        Discriminator { network, optimizer, label_smoothing, max_grad_norm }
    }
}

impl Adversary for Discriminator {
    fn assess_and_update(&mut self, x_hat: &[f32], x_tilde: &[f32], n: usize) -> Result<AdversaryStep> {
        let (loss, mut grads) = discriminator_gradients(&self.network, x_hat, x_tilde, n, self.label_smoothing);
        let (before, after) = clip_grad_norm(&mut [&mut grads[..]], self.max_grad_norm);
        if loss.loss.is_finite() && before.is_finite() {
            self.optimizer.step(&mut self.network.params, &grads);
        }
        Ok(AdversaryStep { accuracy: loss.accuracy, loss: loss.loss, grad_norm_before: before, grad_norm_after: after })
    }

    fn logit_input_gradients(&self, x_hat: &[f32], n: usize) -> (Vec<f32>, Vec<f32>) {
        logit_input_gradients(&self.network, x_hat, n)
    }
}

/// Adversary that always reports the same accuracy and exerts no gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnedAccuracy(pub f64);

impl Adversary for PinnedAccuracy {
    fn assess_and_update(&mut self, _x_hat: &[f32], _x_tilde: &[f32], _n: usize) -> Result<AdversaryStep> {
        Ok(AdversaryStep { accuracy: self.0, ..Default::default() })
    }

    fn logit_input_gradients(&self, x_hat: &[f32], n: usize) -> (Vec<f32>, Vec<f32>) {
        (vec![0.0; n], vec![0.0; x_hat.len()])
    }
}
