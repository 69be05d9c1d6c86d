use dava_lab::metrics::{dci_disentanglement, fvae_metric, mig, representation_sample, FvaeConfig, DEFAULT_BINS};
use dava_lab::pipe::{FactorOracle, NoiseModel};
use dava_lab::synthdata::{build_toysprites, ToySpritesConfig};

#[test]
fn identity_representation_scores_perfectly() {
    let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
    let model = FactorOracle::new(&ds);
    let s = representation_sample(&model, &ds, 10_000, 0).unwrap();
    assert!(mig(&s, DEFAULT_BINS).unwrap() >= 0.95);
    assert!(dci_disentanglement(&s, DEFAULT_BINS).unwrap() >= 0.95);
    assert_eq!(fvae_metric(&model, &ds, &FvaeConfig::default(), 0).unwrap().accuracy, 1.0);
}

#[test]
fn noise_representation_scores_at_chance() {
    let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
    let k = ds.space().num_factors();
    for seed in [0, 1] {
        let model = NoiseModel::new(&ds, k, seed).unwrap();
        let s = representation_sample(&model, &ds, 10_000, seed).unwrap();
        assert!(mig(&s, DEFAULT_BINS).unwrap() <= 0.05);
        let f = fvae_metric(&model, &ds, &FvaeConfig::default(), seed).unwrap().accuracy;
        assert!(f <= 1.0 / k as f64 + 0.1, "fvae {f}");
    }
}
