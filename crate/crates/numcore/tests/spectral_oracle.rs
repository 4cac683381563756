//! Spectral normalization against an SVD oracle.

use nalgebra::DMatrix;
use numcore::rng::derive_rng;
use numcore::sn::SpectralNormState;
use numcore::{spectral_normalize, Tensor};
use rand::Rng;

fn svd_sigma_max(t: &Tensor<f64>) -> f64 {
    let rows = t.shape()[0];
    let cols: usize = t.shape()[1..].iter().product();
    let m = DMatrix::from_row_slice(rows, cols, t.data());
    m.svd(false, false).singular_values[0]
}

#[test]
fn random_matrix_sigma_within_tolerance_of_svd() {
    let mut rng = derive_rng(11, "sn.oracle");
    let w = Tensor::from_fn(vec![8, 8], |_| rng.gen_range(-1.0..1.0));
    let mut state = SpectralNormState::converged(8, 8, &mut rng);
    let normalized = spectral_normalize(&w, &mut state).unwrap();
    let sigma = svd_sigma_max(&normalized);
    assert!(
        (sigma - 1.0).abs() < 1e-3,
        "largest singular value after normalization: {sigma}"
    );
}

#[test]
fn estimate_matches_svd_directly() {
    let mut rng = derive_rng(12, "sn.oracle.direct");
    for trial in 0..20 {
        let rows = 3 + trial % 6;
        let cols = 2 + (trial * 7) % 9;
        let w = Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-2.0..2.0));
        let mut state = SpectralNormState::converged(rows, cols, &mut rng);
        state.power_iterate(&w, numcore::sn::CONVERGED_ITERATIONS).unwrap();
        let estimate = state.sigma(&w).unwrap();
        let truth = svd_sigma_max(&w);
        assert!(
            (estimate - truth).abs() / truth < 1e-3,
            "trial {trial}: power iteration {estimate} vs svd {truth}"
        );
    }
}

#[test]
fn higher_rank_weights_flatten_to_out_rest() {
    let mut rng = derive_rng(13, "sn.oracle.conv");
    let w = Tensor::from_fn(vec![6, 4, 3], |_| rng.gen_range(-1.0..1.0));
    let mut state = SpectralNormState::converged(6, 12, &mut rng);
    let normalized = spectral_normalize(&w, &mut state).unwrap();
    assert_eq!(normalized.shape(), &[6, 4, 3]);
    let sigma = svd_sigma_max(&normalized);
    assert!((sigma - 1.0).abs() < 1e-3, "conv weight sigma {sigma}");
}
