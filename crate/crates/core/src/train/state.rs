use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam};
use crate::synthdata::{sample_random, GroundTruthDataset, ImageShape, ObservationBatch};
use crate::vae::checkpoint::{Checkpoint, CheckpointWriter};
use crate::vae::{standard_normal, NetworkConfig, Vae};

use super::adversary::{Adversary, AdversaryStep, Discriminator};
use super::capacity::{capacity_direction, mu_base};
use super::config::{Objective, TrainConfig};
use super::grads::{adversarial_gradients, vae_gradients, Regularizer, VaeLoss, VaePass};
use super::permute::permute_dims;

/// Per-step training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    /// Step number after this update (the first step is 1).
    pub step: u64,
    /// Batch-mean cross-entropy in nats.
    pub reconstruction: f64,
    pub kl_total: f64,
    pub kl_per_dim: Vec<f64>,
    /// Unweighted capacity deviation term; zero for the KL-weighted objective.
    pub capacity_loss: f64,
    /// Pre-update discriminator accuracy (adversarial objective only).
    pub accuracy: Option<f64>,
    pub discriminator_loss: Option<f64>,
    pub mu_base: f64,
    /// Capacity after this step's update.
    pub capacity: f64,
    pub vae_grad_norm: (f64, f64),
    pub discriminator_grad_norm: Option<(f64, f64)>,
    pub encoder_adversarial_grad_norm: Option<(f64, f64)>,
    pub decoder_adversarial_grad_norm: Option<(f64, f64)>,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "step,recon,kl,acc,mu_base";

    pub fn csv_row(&self) -> String {
        let acc = self.accuracy.map_or(String::new(), |a| a.to_string());
        format!("{},{},{},{},{}", self.step, self.reconstruction, self.kl_total, acc, self.mu_base)
    }

    /// All recorded (before, after) clipping norm pairs.
    pub fn clipped_norms(&self) -> Vec<(f64, f64)> {
        std::iter::once(Some(self.vae_grad_norm))
            .chain([self.discriminator_grad_norm, self.encoder_adversarial_grad_norm, self.decoder_adversarial_grad_norm])
            .flatten()
            .collect()
    }
}

/// Learnable parameters, optimizer state, capacity and RNG of one run.
#[derive(Debug, Clone)]
pub struct TrainState<A = Discriminator> {
    pub config: TrainConfig,
    pub model: Vae,
    pub adversary: Option<A>,
    pub encoder_optimizer: Adam,
    pub decoder_optimizer: Adam,
    /// Capacity in whole multiples of the capacity step.
    capacity_units: u64,
    pub step: u64,
    pub seed: u64,
    rng: ChaCha8Rng,
    pub c_trajectory: Vec<(u64, f64)>,
}

impl TrainState<Discriminator> {
    /// Fresh state; a discriminator is created for the adversarial objective.
    pub fn new(config: TrainConfig, shape: ImageShape, seed: u64) -> Result<Self> {
        Self::build(config, shape, seed, |cfg, arch, rng| {
            cfg.objective.dava().map(|d| {
                Discriminator::new(
                    arch,
                    d.instance_norm,
                    d.discriminator_optimizer,
                    d.label_smoothing,
                    d.discriminator_max_grad_norm,
                    rng,
                )
            })
        })
    }
}

impl<A: Adversary> TrainState<A> {
    /// Fresh state driven by a caller-supplied adversary.
    pub fn with_adversary(config: TrainConfig, shape: ImageShape, seed: u64, adversary: A) -> Result<Self> {
        Self::build(config, shape, seed, |_, _, _| Some(adversary))
    }

    fn build(
        config: TrainConfig,
        shape: ImageShape,
        seed: u64,
        make_adversary: impl FnOnce(&TrainConfig, &NetworkConfig, &mut ChaCha8Rng) -> Option<A>,
    ) -> Result<Self> {
        config.validate()?;
        let arch = network_config(&config, shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Vae::new(arch.clone(), &mut rng)?;
        let adversary = make_adversary(&config, &arch, &mut rng);
        if config.objective.dava().is_some() != adversary.is_some() {
            return Err(Error::Config("an adversary is required exactly for the adversarial objective".into()));
        }
        let encoder_optimizer = Adam::new(config.optimizer, model.encoder.num_params());
        let decoder_optimizer = Adam::new(config.optimizer, model.decoder.num_params());
        let mut state = TrainState {
            config,
            model,
            adversary,
            encoder_optimizer,
            decoder_optimizer,
            capacity_units: 0,
            step: 0,
            seed,
            rng,
            c_trajectory: Vec::new(),
        };
        state.c_trajectory.push((0, state.capacity()));
        Ok(state)
    }

    /// Current capacity target in nats.
    pub fn capacity(&self) -> f64 {
        match &self.config.objective {
            Objective::Dava(d) => self.capacity_units as f64 * d.delta_c,
            Objective::AnnealedVae { c_max, iteration_threshold, .. } => {
                c_max * (self.step as f64 / *iteration_threshold as f64).min(1.0)
            }
            Objective::BetaVae { .. } => 0.0,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Draws a training batch from the state's own random stream.
    pub fn sample_batch(&mut self, dataset: &GroundTruthDataset) -> Result<ObservationBatch> {
        sample_random(dataset, self.config.batch_size, &mut self.rng)
    }

    fn non_finite(&self, context: &'static str, diag: &StepDiagnostics) -> Error {
        Error::NonFinite { context, step: self.step + 1, diagnostics: Box::new(diag.clone()) }
    }

    /// One update of every parameter group on `batch`.
    pub fn train_step(&mut self, batch: &ObservationBatch) -> Result<StepDiagnostics> {
        if batch.shape != self.model.config.input_shape {
            return Err(Error::shape(self.model.config.input_shape, batch.shape));
        }
        let n = batch.len();
        let d = self.model.config.z_dim;
        let x = &batch.images;
        let mut diag = StepDiagnostics { step: self.step + 1, ..Default::default() };

        let regularizer = match &self.config.objective {
            Objective::Dava(c) => Regularizer::Capacity { gamma: c.gamma, capacity: self.capacity(), exponent: 4 },
            Objective::BetaVae { beta } => Regularizer::Kl { beta: *beta },
            Objective::AnnealedVae { gamma, .. } => {
                Regularizer::Capacity { gamma: *gamma, capacity: self.capacity(), exponent: 1 }
            }
        };

        // VAE update.
        let noise = standard_normal(n * d, &mut self.rng);
        let mut g = vae_gradients(&self.model, x, n, noise, VaeLoss::new(regularizer))?;
        diag.reconstruction = g.reconstruction;
        diag.kl_total = g.kl.total;
        diag.kl_per_dim = g.kl.per_dim.clone();
        diag.capacity_loss = g.capacity_loss;
        diag.vae_grad_norm = clip_grad_norm(&mut [&mut g.encoder[..], &mut g.decoder[..]], self.config.max_grad_norm);
        diag.capacity = self.capacity();
        if !g.total.is_finite() || !diag.vae_grad_norm.0.is_finite() {
            return Err(self.non_finite("vae loss", &diag));
        }
        self.encoder_optimizer.step(&mut self.model.encoder.params, &g.encoder);
        self.decoder_optimizer.step(&mut self.model.decoder.params, &g.decoder);

        if let Some(dava) = self.config.objective.dava().cloned() {
            // Recreate the codes and reconstructions with the updated VAE.
            let noise = standard_normal(n * d, &mut self.rng);
            let pass = VaePass::run(&self.model, x, n, noise)?;
            let z_perm = permute_dims(&pass.z, n, d, &mut self.rng);
            let x_tilde = self.model.decode(&z_perm, n)?;

            let AdversaryStep { accuracy, loss, grad_norm_before, grad_norm_after } = self
                .adversary
                .as_mut()
                .expect("adversarial objective has an adversary")
                .assess_and_update(&pass.probs, &x_tilde, n)?;
            diag.accuracy = Some(accuracy);
            diag.discriminator_loss = Some(loss);
            diag.discriminator_grad_norm = Some((grad_norm_before, grad_norm_after));
            if !loss.is_finite() || !grad_norm_before.is_finite() {
                return Err(self.non_finite("discriminator loss", &diag));
            }

            match capacity_direction(accuracy, dava.grace_band) {
                1 => self.capacity_units += 1,
                0 => {}
                _ => self.capacity_units = self.capacity_units.saturating_sub(1),
            }
            diag.capacity = self.capacity();

            let mu = mu_base(accuracy);
            diag.mu_base = mu;
            if mu > 0.0 {
                let adversary = self.adversary.as_ref().expect("adversarial objective has an adversary");
                let (logits, jac) = adversary.logit_input_gradients(&pass.probs, n);
                let mut adv = adversarial_gradients(&self.model, &pass, &logits, &jac, mu * dava.mu_enc, mu * dava.mu_dec);
                let enc = clip_grad_norm(&mut [&mut adv.encoder[..]], self.config.max_grad_norm);
                let dec = clip_grad_norm(&mut [&mut adv.decoder[..]], self.config.max_grad_norm);
                diag.encoder_adversarial_grad_norm = Some(enc);
                diag.decoder_adversarial_grad_norm = Some(dec);
                if !enc.0.is_finite() || !dec.0.is_finite() {
                    return Err(self.non_finite("adversarial gradient", &diag));
                }
                // A zero-weight term is disabled outright: an Adam step on a
                // zero gradient would still move the weights by momentum.
                if dava.mu_enc > 0.0 {
                    self.encoder_optimizer.step(&mut self.model.encoder.params, &adv.encoder);
                }
                if dava.mu_dec > 0.0 {
                    self.decoder_optimizer.step(&mut self.model.decoder.params, &adv.decoder);
                }
            }
        }

        self.step += 1;
        diag.capacity = self.capacity();
        if self.step.is_multiple_of(self.config.trajectory_every) {
            self.c_trajectory.push((self.step, diag.capacity));
        }
        Ok(diag)
    }

    /// Trains on freshly sampled batches until `total_steps`, calling
    /// `on_step` after every step.
    pub fn run(
        &mut self,
        dataset: &GroundTruthDataset,
        mut on_step: impl FnMut(&Self, &StepDiagnostics) -> Result<()>,
    ) -> Result<()> {
        while self.step < self.config.total_steps {
            let batch = self.sample_batch(dataset)?;
            let diag = self.train_step(&batch)?;
            on_step(self, &diag)?;
        }
        Ok(())
    }
}

fn network_config(config: &TrainConfig, shape: ImageShape) -> NetworkConfig {
    let mut arch = NetworkConfig::new(config.z_dim, shape);
    arch.decoder_channels = config.decoder_channels;
    arch.hidden_units = config.hidden_units;
    arch
}

/// Trains a model from scratch and returns the final state.
pub fn train(dataset: &GroundTruthDataset, config: &TrainConfig, seed: u64) -> Result<TrainState> {
    let mut state = TrainState::new(config.clone(), dataset.shape(), seed)?;
    state.run(dataset, |_, _| Ok(()))?;
    Ok(state)
}

/// Trains the KL-weighted baseline.
pub fn train_beta_vae(dataset: &GroundTruthDataset, config: &TrainConfig, seed: u64) -> Result<TrainState> {
    if !matches!(config.objective, Objective::BetaVae { .. }) {
        return Err(Error::Config(format!("expected a beta_vae objective, got {}", config.objective.name())));
    }
    train(dataset, config, seed)
}

/// Renders `(step, C)` pairs as CSV.
pub fn trajectory_csv(trajectory: &[(u64, f64)]) -> String {
    let mut out = String::from("step,C\n");
    for (s, c) in trajectory {
        let _ = writeln!(out, "{s},{c}");
    }
    out
}

pub fn parse_trajectory_csv(text: &str, path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("step,C") {
        return Err(Error::format(path, "missing `step,C` header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (s, c) = l.split_once(',').ok_or_else(|| Error::format(path, format!("bad row `{l}`")))?;
            Ok((
                s.parse().map_err(|_| Error::format(path, format!("bad step `{s}`")))?,
                c.parse().map_err(|_| Error::format(path, format!("bad capacity `{c}`")))?,
            ))
        })
        .collect()
}

fn optimizer_blocks(w: &mut CheckpointWriter, name: &str, opt: &Adam) {
    w.block(format!("optim.{name}.m"), vec![opt.m.len()], opt.m.clone())
        .block(format!("optim.{name}.v"), vec![opt.v.len()], opt.v.clone())
        .set(format!("optim.{name}.t"), opt.t);
}

fn restore_optimizer(ck: &Checkpoint, name: &str, opt: &mut Adam) -> Result<()> {
    let m = ck.block(&format!("optim.{name}.m"))?;
    let v = ck.block(&format!("optim.{name}.v"))?;
    if m.data.len() != opt.m.len() || v.data.len() != opt.v.len() {
        return Err(Error::shape(opt.m.len(), m.data.len()));
    }
    opt.m.copy_from_slice(&m.data);
    opt.v.copy_from_slice(&v.data);
    opt.t = ck.get_parsed(&format!("optim.{name}.t"))?;
    Ok(())
}

impl TrainState<Discriminator> {
    /// Writes the complete state so that training resumes bit-identically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = CheckpointWriter::new();
        w.network_config(&self.model.config)
            .set("seed", self.seed)
            .set("step", self.step)
            .set("capacity", self.capacity())
            .set("capacity_units", self.capacity_units)
            .set("rng_word_pos", self.rng.get_word_pos())
            .set("train_config", serde_json::to_string(&self.config)?);
        w.network("encoder", &self.model.encoder).network("decoder", &self.model.decoder);
        optimizer_blocks(&mut w, "encoder", &self.encoder_optimizer);
        optimizer_blocks(&mut w, "decoder", &self.decoder_optimizer);
        if let Some(disc) = &self.adversary {
            w.network("discriminator", &disc.network);
            optimizer_blocks(&mut w, "discriminator", &disc.optimizer);
        }
        w.write(dir)?;
        let path = dir.join("c_trajectory.csv");
        fs::write(&path, trajectory_csv(&self.c_trajectory)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let ck = Checkpoint::read(dir)?;
        let config = TrainConfig::from_json(ck.get("train_config")?)?;
        let seed: u64 = ck.get_parsed("seed")?;
        let shape = ck.network_config()?.input_shape;
        let mut state = TrainState::new(config, shape, seed)?;
        ck.load_network("encoder", &mut state.model.encoder)?;
        ck.load_network("decoder", &mut state.model.decoder)?;
        restore_optimizer(&ck, "encoder", &mut state.encoder_optimizer)?;
        restore_optimizer(&ck, "decoder", &mut state.decoder_optimizer)?;
        if let Some(disc) = state.adversary.as_mut() {
            ck.load_network("discriminator", &mut disc.network)?;
            restore_optimizer(&ck, "discriminator", &mut disc.optimizer)?;
        }
        state.step = ck.get_parsed("step")?;
        state.capacity_units = ck.get_parsed("capacity_units")?;
        state.rng.set_word_pos(ck.get_parsed("rng_word_pos")?);
        let path = dir.join("c_trajectory.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        state.c_trajectory = parse_trajectory_csv(&text, &path)?;
        Ok(state)
    }
}
