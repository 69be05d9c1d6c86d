use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Adam { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step<T: Real>(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "optimizer size");
        assert_eq!(grads.len(), params.len(), "gradient size");
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.t as i32;
        let lr_t = learning_rate * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
        let (b1, b2) = (beta1 as f32, beta2 as f32);
        let (lr_t, eps) = (lr_t as f32, epsilon as f32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g.to_f32().unwrap();
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let upd = lr_t * *m / (v.sqrt() + eps);
            *p = *p - T::from_f32(upd).unwrap();
        }
    }
}

/// Euclidean norm over several gradient buffers, accumulated in `f64`.
pub fn global_norm<T: Real>(groups: &[&[T]]) -> f64 {
    groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|&v| {
            let v = v.to_f64().unwrap();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales the buffers jointly so their global norm is at most `max_norm`.
/// Returns `(norm_before, norm_after)`.
pub fn clip_grad_norm<T: Real>(groups: &mut [&mut [T]], max_norm: f64) -> (f64, f64) {
    let before = global_norm(&groups.iter().map(|g| &**g).collect::<Vec<_>>());
    if !(before > max_norm) {
        return (before, before);
    }
    let scale = T::from_f64_lossy(max_norm / (before + 1e-12));
    for g in groups.iter_mut() {
        for v in g.iter_mut() {
            *v = *v * scale;
        }
    }
    let after = global_norm(&groups.iter().map(|g| &**g).collect::<Vec<_>>());
    (before, after)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut a = [3.0f32, 0.0];
        let mut b = [4.0f32];
        let (before, after) = clip_grad_norm(&mut [&mut a[..], &mut b[..]], 1.0);
        assert!((before - 5.0).abs() < 1e-9);
        assert!(after <= 1.0 + 1e-6);
        assert!((a[0] / b[0] - 0.75).abs() < 1e-6);

        let mut small = vec![0.1f32, 0.2];
        let (before, after) = clip_grad_norm(&mut [&mut small[..]], 1.0);
        assert_eq!(before, after);
        assert_eq!(small, vec![0.1, 0.2]);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.01, ..Default::default() }, 2);
        let mut p = vec![1.0f32, -1.0];
        adam.step(&mut p, &[0.5f32, -2.0]);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 0.99).abs() < 1e-6);
    }
}
