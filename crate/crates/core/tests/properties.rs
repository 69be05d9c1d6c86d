use dava_lab::harness::summarize;
use dava_lab::metrics::{
    dci_disentanglement, majority_vote_accuracy, mig, representation_sample, spearman, MetricRow, RepresentationSample,
    Vote, DEFAULT_BINS,
};
use dava_lab::pipe::{pipe_score, sample_fp, FactorOracle, FpSampler, PipeConfig};
use dava_lab::synthdata::{build_toysprites, ImageShape, ToySprites, ToySpritesConfig};
use dava_lab::train::{mu_base, update_capacity};
use dava_lab::vae::{NetworkConfig, Vae};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_sprites() -> ToySpritesConfig {
    ToySpritesConfig { side: 16, x_positions: 4, y_positions: 4, min_half_extent: 0.125, max_half_extent: 0.25, ..Default::default() }
}

fn draw(r: &ToySprites, tuple: &[usize]) -> Vec<f32> {
    let mut out = vec![0.0f32; r.shape().len()];
    r.draw_into(tuple, &mut out).unwrap();
    out
}

fn random_sample(n: usize, d: usize, k: usize, seed: u64) -> RepresentationSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<usize> = (0..n * k).map(|_| rng.random_range(0..4)).collect();
    let latents: Vec<f64> = (0..n * d)
        .map(|i| {
            let row = i / d;
            // mix a factor into each latent so scores are away from zero
            factors[row * k + (i % d) % k] as f64 + rng.random::<f64>() * 2.0
        })
        .collect();
    RepresentationSample::new(latents, d, factors, k).unwrap()
}

fn two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendering_is_pure_bounded_and_translation_invariant(
        shape in 0usize..2, scale in 0usize..3, x in 0usize..4, y in 0usize..4, color in 0usize..3,
        dx in 0usize..4, dy in 0usize..4,
    ) {
        let r = ToySprites::new(small_sprites()).unwrap();
        let t = [shape, scale, x, y, color];
        let a = draw(&r, &t);
        let b = draw(&r, &t);
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert!(a.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let moved = draw(&r, &[shape, scale, dx, dy, color]);
        let sum = |img: &[f32]| img.iter().map(|&p| f64::from(p)).sum::<f64>();
        prop_assert!((sum(&a) - sum(&moved)).abs() < 1e-3, "{} vs {}", sum(&a), sum(&moved));
    }

    #[test]
    fn mu_base_is_a_continuous_hinge(acc in 0.0f64..1.0, h in 1e-9f64..1e-3) {
        let m = mu_base(acc);
        if acc <= 0.5 {
            prop_assert_eq!(m, 0.0);
        } else {
            prop_assert!((m - 100.0 * (acc - 0.5)).abs() < 1e-9);
        }
        prop_assert!((mu_base(acc + h) - m).abs() <= 100.0 * h + 1e-12);
    }

    #[test]
    fn capacity_never_goes_negative(accs in prop::collection::vec(0.0f64..1.0, 1..400), start in 0u32..5) {
        let mut c = f64::from(start) * 4e-5;
        for acc in accs {
            c = update_capacity(acc, c, 4e-5);
            prop_assert!(c >= 0.0);
        }
    }

    #[test]
    fn spearman_ignores_positive_affine_maps(seed in any::<u64>(), len in 3usize..40, a in 0.1f64..10.0, b in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = rng.random_range(2..8);
        let xs: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(0..levels)) * 0.25).collect();
        let ys: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        match (spearman(&xs, &ys), spearman(&mapped, &ys)) {
            (Ok(r), Ok(s)) => {
                prop_assert_eq!(r, s);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "one side failed: {:?}", other),
        }
    }

    #[test]
    fn dci_ignores_latent_and_factor_order(seed in any::<u64>(), d in 2usize..5, k in 2usize..4) {
        let s = random_sample(300, d, k, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut pd: Vec<usize> = (0..d).collect();
        let mut pk: Vec<usize> = (0..k).collect();
        use rand::seq::SliceRandom;
        pd.shuffle(&mut rng);
        pk.shuffle(&mut rng);
        let n = s.len();
        let latents: Vec<f64> = (0..n).flat_map(|i| pd.iter().map(move |&j| (i, j))).map(|(i, j)| s.latents[i * d + j]).collect();
        let factors: Vec<usize> = (0..n).flat_map(|i| pk.iter().map(move |&j| (i, j))).map(|(i, j)| s.factors[i * k + j]).collect();
        let t = RepresentationSample::new(latents, d, factors, k).unwrap();
        let (a, b) = (dci_disentanglement(&s, DEFAULT_BINS).unwrap(), dci_disentanglement(&t, DEFAULT_BINS).unwrap());
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn supervised_scores_stay_in_range(seed in any::<u64>(), d in 1usize..6, k in 1usize..4, n in 2usize..200) {
        let s = random_sample(n, d, k, seed);
        let m = mig(&s, DEFAULT_BINS).unwrap();
        let c = dci_disentanglement(&s, DEFAULT_BINS).unwrap();
        prop_assert!((0.0..=1.0).contains(&m), "mig {m}");
        prop_assert!((0.0..=1.0).contains(&c), "dci {c}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut votes = |count: usize| -> Vec<Vote> {
            (0..count).map(|_| Vote { dim: rng.random_range(0..d), factor: rng.random_range(0..k) }).collect()
        };
        let (train, test) = (votes(n), votes(n));
        let (tr, te) = majority_vote_accuracy(&train, &test, d, k);
        prop_assert!((0.0..=1.0).contains(&tr) && (0.0..=1.0).contains(&te));
    }

    #[test]
    fn summary_matches_two_pass_statistics(values in prop::collection::vec(-1e3f64..1e3, 1..12)) {
        let rows: Vec<MetricRow> = values
            .iter()
            .enumerate()
            .map(|(i, &value)| MetricRow {
                dataset: "d".into(),
                architecture: "dava".into(),
                digest: "x".into(),
                seed: i as u64,
                metric: "mig".into(),
                value,
                sampler: String::new(),
                flags: String::new(),
            })
            .collect();
        let s = summarize(&rows);
        prop_assert_eq!(s.len(), 1);
        let (mean, std) = two_pass(&values);
        prop_assert!((s[0].mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((s[0].std - std).abs() <= 1e-12 * std.max(1.0));
        prop_assert_eq!(s[0].runs, values.len());
    }

    #[test]
    fn pipe_score_is_exactly_twice_the_error(acc in 0.0f64..1.0) {
        prop_assert_eq!(pipe_score(acc), 2.0 * (1.0 - acc));
    }

    #[test]
    fn pipe_splits_are_balanced(set_size in 2usize..20_000, frac in 0.05f64..0.95) {
        let cfg = PipeConfig { set_size, train_fraction: frac, ..Default::default() };
        let (train, test) = cfg.split_sizes();
        prop_assert_eq!(train + test, set_size);
        if cfg.validate().is_ok() {
            prop_assert!(train > 0 && test > 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn samplers_emit_unit_range_images_for_any_model(seed in any::<u64>(), z_dim in 1usize..6) {
        let ds = build_toysprites(&small_sprites()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = NetworkConfig::new(z_dim, ImageShape { height: 16, width: 16, channels: 1 });
        cfg.encoder_channels = [4, 4, 6, 6];
        cfg.decoder_channels = [6, 4, 4];
        cfg.hidden_units = 12;
        let model: Vae<f32> = Vae::new(cfg, &mut rng).unwrap();
        for sampler in [FpSampler::Permute, FpSampler::UniformRange] {
            let batch = sample_fp(sampler, &model, &ds, 20, &mut rng).unwrap();
            prop_assert_eq!(batch.len(), 20);
            prop_assert_eq!(batch.image(0).len(), ds.shape().len());
            prop_assert!((0..20).flat_map(|i| batch.image(i).iter()).all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn monotone_latent_maps_keep_mig_and_dci(curvature in prop::collection::vec(0.0f64..0.5, 5), seed in 0u64..1000) {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let s = representation_sample(&FactorOracle::new(&ds), &ds, 10_000, seed).unwrap();
        let (m0, d0) = (mig(&s, DEFAULT_BINS).unwrap(), dci_disentanglement(&s, DEFAULT_BINS).unwrap());
        let d = s.d;
        // z + c z^2 on the unit interval has slope in [1, 2]
        let latents = s.latents.iter().enumerate().map(|(i, &z)| z + curvature[(i % d) % curvature.len()] * z * z).collect();
        let t = RepresentationSample::new(latents, d, s.factors.clone(), s.k).unwrap();
        let (m1, d1) = (mig(&t, DEFAULT_BINS).unwrap(), dci_disentanglement(&t, DEFAULT_BINS).unwrap());
        prop_assert!((m0 - m1).abs() <= 0.02, "mig {m0} -> {m1}");
        prop_assert!((d0 - d1).abs() <= 0.02, "dci {d0} -> {d1}");
    }
}
