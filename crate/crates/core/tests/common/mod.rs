//! Independent reference computations shared by the integration tests and
//! the acceptance runner.

#![allow(dead_code)]

use std::collections::HashMap;

use dava_lab::nn::Network;
use dava_lab::synthdata::ImageShape;
use dava_lab::train::grads::{
    adversarial_gradients, discriminator_gradients, logit_input_gradients, vae_gradients, Regularizer, VaeLoss, VaePass,
};
use dava_lab::train::permute_dims;
use dava_lab::vae::{standard_normal, NetworkConfig, Vae};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Largest relative error of analytic against central-difference gradients
/// over the `picks` coordinates. `f` evaluates the loss at a parameter vector.
pub fn max_relative_error(params: &[f64], analytic: &[f64], picks: &[usize], f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for &i in picks {
        p[i] = params[i] + h;
        let up = f(&p);
        p[i] = params[i] - h;
        let down = f(&p);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max((numeric - analytic[i]).abs() / scale);
    }
    worst
}

/// Ten coordinates with non-negligible analytic gradient, spread over the
/// whole parameter vector.
pub fn slice_of_ten(analytic: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let strong: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].abs() > 1e-5).collect();
    assert!(strong.len() >= 10, "too few parameters with a usable gradient ({})", strong.len());
    rand::seq::index::sample(rng, strong.len(), 10).into_iter().map(|k| strong[k]).collect()
}

fn tiny_vae(rng: &mut ChaCha8Rng) -> (NetworkConfig, Vae<f64>) {
    let mut cfg = NetworkConfig::new(3, ImageShape { height: 16, width: 16, channels: 1 });
    cfg.encoder_channels = [4, 4, 6, 6];
    cfg.decoder_channels = [6, 4, 4];
    cfg.hidden_units = 12;
    let vae = Vae::new(cfg.clone(), rng).expect("valid tiny config");
    (cfg, vae)
}

fn binary_images(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n * 256).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect()
}

/// Worst relative error for each loss family, checked at double precision
/// on ten-parameter slices of a small network.
pub fn gradient_check_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cfg, vae) = tiny_vae(&mut rng);
    let n = 3;
    let x = binary_images(n, &mut rng);
    let noise: Vec<f64> = standard_normal(n * cfg.z_dim, &mut rng);
    let kl_now = vae_gradients(&vae, &x, n, noise.clone(), VaeLoss::new(Regularizer::Kl { beta: 0.0 })).unwrap().kl.total;

    let losses: [(&'static str, VaeLoss); 4] = [
        ("reconstruction", VaeLoss::new(Regularizer::Kl { beta: 0.0 })),
        ("kl", VaeLoss { reconstruction_weight: 0.0, regularizer: Regularizer::Kl { beta: 1.0 } }),
        (
            "capacity e=1",
            VaeLoss {
                reconstruction_weight: 0.0,
                regularizer: Regularizer::Capacity { gamma: 2.0, capacity: kl_now + 1.0, exponent: 1 },
            },
        ),
        (
            "capacity e=4",
            VaeLoss {
                reconstruction_weight: 0.0,
                regularizer: Regularizer::Capacity { gamma: 2.0, capacity: kl_now + 1.0, exponent: 4 },
            },
        ),
    ];

    let mut out = Vec::new();
    for (name, loss) in losses {
        let g = vae_gradients(&vae, &x, n, noise.clone(), loss).unwrap();
        let mut worst = 0.0f64;
        for part in ["encoder", "decoder"] {
            let (params, analytic) = match part {
                "encoder" => (&vae.encoder.params, &g.encoder),
                _ => (&vae.decoder.params, &g.decoder),
            };
            if analytic.iter().all(|v| v.abs() <= 1e-5) {
                continue; // the KL and capacity terms do not reach the decoder
            }
            let picks = slice_of_ten(analytic, &mut rng);
            let err = max_relative_error(params, analytic, &picks, |p| {
                let mut v = vae.clone();
                match part {
                    "encoder" => v.encoder.params.copy_from_slice(p),
                    _ => v.decoder.params.copy_from_slice(p),
                }
                vae_gradients(&v, &x, n, noise.clone(), loss).unwrap().total
            });
            worst = worst.max(err);
        }
        out.push((name, worst));
    }

    let disc: Network<f64> = cfg.build_discriminator(true, &mut rng);
    let x_fp = binary_images(n, &mut rng);
    let eps = 0.1;
    let (_, analytic) = discriminator_gradients(&disc, &x, &x_fp, n, eps);
    let picks = slice_of_ten(&analytic, &mut rng);
    let err = max_relative_error(&disc.params, &analytic, &picks, |p| {
        let mut d = disc.clone();
        d.params.copy_from_slice(p);
        discriminator_gradients(&d, &x, &x_fp, n, eps).0.loss
    });
    out.push(("discriminator", err));

    let (w_enc, w_dec) = (0.7, 1.3);
    let adversarial = |v: &Vae<f64>| {
        let pass = VaePass::run(v, &x, n, noise.clone()).unwrap();
        let (logits, jac) = logit_input_gradients(&disc, &pass.probs, n);
        adversarial_gradients(v, &pass, &logits, &jac, w_enc, w_dec)
    };
    let g = adversarial(&vae);
    let picks = slice_of_ten(&g.encoder, &mut rng);
    let enc_err = max_relative_error(&vae.encoder.params, &g.encoder, &picks, |p| {
        let mut v = vae.clone();
        v.encoder.params.copy_from_slice(p);
        w_enc * adversarial(&v).mean_log_d
    });
    let picks = slice_of_ten(&g.decoder, &mut rng);
    let dec_err = max_relative_error(&vae.decoder.params, &g.decoder, &picks, |p| {
        let mut v = vae.clone();
        v.decoder.params.copy_from_slice(p);
        w_dec * adversarial(&v).mean_log_one_minus_d
    });
    out.push(("adversarial encoder", enc_err));
    out.push(("adversarial decoder", dec_err));
    out
}

/// Monte-Carlo estimate of KL(N(mu, var) || N(0, 1)) as the mean of
/// `log q(z) - log p(z)` over `draws` samples.
pub fn kl_monte_carlo(mu: f64, var: f64, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let sd = var.sqrt();
    let mut acc = 0.0;
    for _ in 0..draws {
        let e: f64 = rng.sample(StandardNormal);
        let z = mu + sd * e;
        // log q - log p; the 2*pi terms cancel
        acc += -0.5 * var.ln() - 0.5 * e * e + 0.5 * z * z;
    }
    acc / draws as f64
}

/// Chi-square p-value of the permutations one column of four distinct
/// values goes through over `trials` shuffles.
pub fn permutation_p_value(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<u32> = vec![0, 1, 2, 3];
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for _ in 0..trials {
        *counts.entry(permute_dims(&z, 4, 1, &mut rng)).or_default() += 1;
    }
    assert!(counts.len() <= 24);
    let expected = trials as f64 / 24.0;
    let mut stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    stat += (24 - counts.len()) as f64 * expected;
    ChiSquared::new(23.0).unwrap().sf(stat)
}

/// Average ranks (1-based) by counting, quadratic in the length.
pub fn brute_force_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of the brute-force ranks, two-pass.
pub fn brute_force_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (brute_force_ranks(xs), brute_force_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// A vector of length 5..40 drawn from a small value set so ties are common.
pub fn tied_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let levels = rng.random_range(2..8);
    (0..len).map(|_| f64::from(rng.random_range(0..levels)) * 0.25).collect()
}

/// A small but complete sweep configuration for fast end-to-end checks.
pub const MINI_SWEEP: &str = r#"{
    "profile": "desk",
    "dataset": {"side": 16, "x_positions": 4, "y_positions": 4, "min_half_extent": 0.125, "max_half_extent": 0.25},
    "architectures": [{"architecture": "dava"}, {"architecture": "beta_vae", "beta": 1.0}],
    "seeds": [0, 1],
    "metrics": ["pipe", "rec", "pipe_rec", "mig", "dci", "fvae"],
    "train": {"total_steps": 120, "batch_size": 16, "z_dim": 4, "decoder_channels": [8, 8, 8], "hidden_units": 32},
    "pipe": {"set_size": 512, "steps": 150, "batch_size": 32},
    "fvae": {"votes": 100, "scale_samples": 500},
    "supervised_samples": 1000
}"#;
