//! Accuracy-driven capacity and adversarial-weight schedules.

/// Upper edge of the accuracy band in which the capacity is held constant.
pub const GRACE_BAND: f64 = 0.51;

/// Direction of the capacity update for a discriminator accuracy:
/// `+1` at or below chance, `0` inside the grace band, `-1` above it.
pub fn capacity_direction(acc: f64, grace_band: f64) -> i8 {
    if acc <= 0.5 {
        1
    } else if acc <= grace_band {
        0
    } else {
        -1
    }
}

/// Next capacity after one step, never below zero.
pub fn update_capacity(acc: f64, c: f64, delta_c: f64) -> f64 {
    update_capacity_with_band(acc, c, delta_c, GRACE_BAND)
}

pub fn update_capacity_with_band(acc: f64, c: f64, delta_c: f64, grace_band: f64) -> f64 {
    match capacity_direction(acc, grace_band) {
        1 => c + delta_c,
        0 => c,
        _ => (c - delta_c).max(0.0),
    }
}

/// Adversarial weight: zero up to chance accuracy, then linear with slope 100.
pub fn mu_base(acc: f64) -> f64 {
    ((acc - 0.5) * 100.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_examples() {
        assert_eq!(update_capacity(0.4, 1.0, 4e-5), 1.0 + 4e-5);
        assert_eq!(update_capacity(0.505, 1.0, 4e-5), 1.0);
        assert_eq!(update_capacity(0.7, 0.0, 4e-5), 0.0);
        assert_eq!(update_capacity(0.7, 1.0, 4e-5), 1.0 - 4e-5);
        assert_eq!(update_capacity(0.5, 0.0, 4e-5), 4e-5);
        assert_eq!(update_capacity(0.51, 2.0, 4e-5), 2.0);
    }

    #[test]
    fn mu_base_examples() {
        assert_eq!(mu_base(0.5), 0.0);
        assert!((mu_base(0.55) - 5.0).abs() < 1e-12);
        assert_eq!(mu_base(0.49), 0.0);
        assert!((mu_base(1.0) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn mu_base_is_piecewise_linear() {
        for i in 0..=1000 {
            let acc = i as f64 / 1000.0;
            let expect = if acc <= 0.5 { 0.0 } else { (acc - 0.5) * 100.0 };
            assert_eq!(mu_base(acc), expect.max(0.0));
        }
    }
}
