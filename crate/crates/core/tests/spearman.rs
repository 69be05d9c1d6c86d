mod common;

use dava_lab::metrics::{correlation_report, fractional_ranks, spearman, MetricRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_brute_force_on_tied_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 1_000 {
        let n = rng.random_range(5..40);
        let (a, b) = (common::tied_vector(&mut rng, n), common::tied_vector(&mut rng, n));
        let oracle = common::brute_force_spearman(&a, &b);
        if !oracle.is_finite() {
            assert!(spearman(&a, &b).is_err());
            continue;
        }
        let got = spearman(&a, &b).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        checked += 1;
    }
}

#[test]
fn ranks_average_ties() {
    assert_eq!(fractional_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
}

fn rows(metric: &str, values: &[f64]) -> Vec<MetricRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| MetricRow {
            dataset: "toy".into(),
            architecture: "m".into(),
            digest: "d".into(),
            seed: i as u64,
            metric: metric.into(),
            value,
            sampler: String::new(),
            flags: String::new(),
        })
        .collect()
}

#[test]
fn hand_computed_three_metric_table() {
    // a ranks 1..10, b the reverse, c swaps neighbours: sum d^2 = 10
    let a: Vec<f64> = (1..=10).map(f64::from).collect();
    let b: Vec<f64> = a.iter().rev().map(|v| v * 0.1).collect();
    let c = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0];
    let mut all = rows("a", &a);
    all.extend(rows("b", &b));
    all.extend(rows("c", &c));
    let m = &correlation_report(&all).unwrap()[0];
    let r = 1.0 - 6.0 * 10.0 / (10.0 * 99.0);
    let expected = [[1.0, -1.0, r], [-1.0, 1.0, -r], [r, -r, 1.0]];
    assert_eq!(m.metrics, ["a", "b", "c"]);
    assert_eq!(m.models, 10);
    for (i, row) in expected.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((m.rho[i][j] - v).abs() < 1e-12, "rho[{i}][{j}] = {}", m.rho[i][j]);
        }
    }
}
