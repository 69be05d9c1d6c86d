mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in [1, 2] {
        for (name, err) in common::gradient_check_errors(seed) {
            assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
        }
    }
}
