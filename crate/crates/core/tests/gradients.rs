mod common;

use common::check_gradients;

#[test]
fn reconstruction_gradient_matches_central_differences() {
    for seed in 0..3 {
        let r = check_gradients(seed, 0.0, 1e-6);
        assert!(r.max_rel < 1e-5, "seed {seed}: max relative error {:.3e}", r.max_rel);
    }
}

#[test]
fn entropy_gradient_matches_central_differences() {
    for seed in 0..3 {
        let r = check_gradients(seed, 1.0, 1e-6);
        assert!(r.max_rel < 1e-5, "seed {seed}: max relative error {:.3e}", r.max_rel);
    }
}

#[test]
fn every_parameter_is_checked() {
    let r = check_gradients(0, 0.1, 1e-6);
    let (params, palette, _, _) = common::small_problem(0);
    assert_eq!(r.checked, params.param_count() + palette.colors.len() * 3);
}
