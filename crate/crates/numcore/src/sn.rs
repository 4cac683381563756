//! Spectral normalization by power iteration.
//!
//! A weight is divided by the power-iteration estimate of its largest
//! singular value so each layer stays close to 1-Lipschitz. Training
//! advances the iteration once per step; tests use a converged mode with
//! enough iterations to pin the estimate against an SVD oracle.

use rand::Rng;

use crate::error::NumError;
use crate::graph::{Graph, Mode, NodeId};
use crate::real::Real;
use crate::tensor::Tensor;

/// Iterations used by [`SpectralNormState::converged`] mode.
pub const CONVERGED_ITERATIONS: usize = 300;
/// Floor substituted for a degenerate (near-zero) singular value estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Power-iteration vectors for one normalized weight.
///
/// `u` has the weight's output dimension, `v` the flattened input dimension.
/// Both stay unit-norm after every update.
#[derive(Debug, Clone)]
pub struct SpectralNormState<F: Real> {
    u: Vec<F>,
    v: Vec<F>,
    /// Power iterations performed per training-step use.
    pub iters_per_step: usize,
}

impl<F: Real> SpectralNormState<F> {
    /// Fresh state with a random unit `u`; one iteration per training step.
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let mut u: Vec<F> = (0..out_dim).map(|_| F::sample_standard_normal(rng)).collect();
        normalize(&mut u);
        SpectralNormState {
            u,
            v: vec![F::zero(); in_dim],
            iters_per_step: 1,
        }
    }

    /// Test/inspection mode: enough iterations per use to converge.
    pub fn converged(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let mut s = Self::new(out_dim, in_dim, rng);
        s.iters_per_step = CONVERGED_ITERATIONS;
        s
    }

    pub fn u(&self) -> &[F] {
        &self.u
    }

    pub fn v(&self) -> &[F] {
        &self.v
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u.len(), self.v.len())
    }

    /// Rebuilds state from stored vectors (checkpoint load).
    pub fn from_vectors(u: Vec<F>, v: Vec<F>, iters_per_step: usize) -> Self {
        SpectralNormState { u, v, iters_per_step }
    }

    fn check_weight(&self, w: &Tensor<F>) -> Result<(usize, usize), NumError> {
        let out_dim = w.shape()[0];
        let rest: usize = w.shape()[1..].iter().product();
        if out_dim != self.u.len() || rest != self.v.len() {
            return Err(NumError::shapes(
                "spectral_norm state",
                (self.u.len(), self.v.len()),
                (out_dim, rest),
            ));
        }
        Ok((out_dim, rest))
    }

    /// Runs `iters` power iterations against `w` (viewed as `[out, rest]`),
    /// updating `u` and `v` in place.
    pub fn power_iterate(&mut self, w: &Tensor<F>, iters: usize) -> Result<(), NumError> {
        let (out_dim, rest) = self.check_weight(w)?;
        let wd = w.data();
        for _ in 0..iters {
            // v <- normalize(Wᵀ u)
            for j in 0..rest {
                self.v[j] = F::zero();
            }
            for (o, &uo) in self.u.iter().enumerate() {
                let row = &wd[o * rest..(o + 1) * rest];
                for j in 0..rest {
                    self.v[j] += row[j] * uo;
                }
            }
            normalize(&mut self.v);
            // u <- normalize(W v)
            for o in 0..out_dim {
                let row = &wd[o * rest..(o + 1) * rest];
                let mut acc = F::zero();
                for j in 0..rest {
                    acc += row[j] * self.v[j];
                }
                self.u[o] = acc;
            }
            normalize(&mut self.u);
        }
        Ok(())
    }

    /// `σ̂ = uᵀ W v` with the current vectors.
    pub fn sigma(&self, w: &Tensor<F>) -> Result<F, NumError> {
        let (_, rest) = self.check_weight(w)?;
        let wd = w.data();
        let mut sigma = F::zero();
        for (o, &uo) in self.u.iter().enumerate() {
            let row = &wd[o * rest..(o + 1) * rest];
            let mut acc = F::zero();
            for j in 0..rest {
                acc += row[j] * self.v[j];
            }
            sigma += uo * acc;
        }
        Ok(sigma)
    }
}

fn normalize<F: Real>(x: &mut [F]) {
    let mut sq = F::zero();
    for &v in x.iter() {
        sq += v * v;
    }
    let norm = sq.sqrt().max(F::from_f64(SIGMA_FLOOR));
    for v in x.iter_mut() {
        *v /= norm;
    }
}

/// Advances the power iteration (per `state.iters_per_step`) and returns
/// `w / σ̂`, with σ̂ floored at [`SIGMA_FLOOR`] for degenerate weights.
pub fn spectral_normalize<F: Real>(
    w: &Tensor<F>,
    state: &mut SpectralNormState<F>,
) -> Result<Tensor<F>, NumError> {
    state.power_iterate(w, state.iters_per_step)?;
    let sigma = state.sigma(w)?.max(F::from_f64(SIGMA_FLOOR));
    Ok(w.map(|x| x / sigma))
}

/// Graph version: advances state only in `Train` mode, then divides the bound
/// weight node by the σ̂ node so gradients flow through the normalization.
pub fn spectral_normalize_node<F: Real>(
    graph: &mut Graph<F>,
    w: NodeId,
    state: &mut SpectralNormState<F>,
    mode: Mode,
) -> Result<NodeId, NumError> {
    if matches!(mode, Mode::Train) {
        let w_val = graph.value(w).clone();
        state.power_iterate(&w_val, state.iters_per_step)?;
    }
    let sigma_val = state.sigma(graph.value(w))?;
    if sigma_val.as_f64() < SIGMA_FLOOR {
        // Degenerate weight: divide by the floor as a constant.
        let floor = graph.constant(Tensor::scalar(F::from_f64(SIGMA_FLOOR)));
        return graph.div_by_scalar(w, floor);
    }
    let sigma = graph.sn_sigma(w, state.u(), state.v())?;
    graph.div_by_scalar(w, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn identity_weight_unchanged() {
        let mut rng = derive_rng(1, "sn.test");
        let w = Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut state = SpectralNormState::converged(2, 2, &mut rng);
        let out = spectral_normalize(&w, &mut state).unwrap();
        for (a, e) in out.data().iter().zip(w.data()) {
            assert!((a - e).abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn diagonal_two_one_halves() {
        let mut rng = derive_rng(2, "sn.test");
        let w = Tensor::<f64>::from_vec(vec![2, 2], vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let mut state = SpectralNormState::converged(2, 2, &mut rng);
        let out = spectral_normalize(&w, &mut state).unwrap();
        let expect = [1.0, 0.0, 0.0, 0.5];
        for (a, e) in out.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn vectors_stay_unit_norm() {
        let mut rng = derive_rng(3, "sn.test");
        let w = Tensor::<f64>::from_fn(vec![5, 7], |i| ((i * 37 % 11) as f64 - 5.0) / 3.0);
        let mut state = SpectralNormState::new(5, 7, &mut rng);
        for _ in 0..5 {
            state.power_iterate(&w, 1).unwrap();
            let un: f64 = state.u().iter().map(|v| v * v).sum::<f64>().sqrt();
            let vn: f64 = state.v().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((un - 1.0).abs() < 1e-12);
            assert!((vn - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_uses_sigma_floor() {
        let mut rng = derive_rng(4, "sn.test");
        let w = Tensor::<f64>::zeros(vec![3, 3]);
        let mut state = SpectralNormState::converged(3, 3, &mut rng);
        let out = spectral_normalize(&w, &mut state).unwrap();
        assert!(out.is_finite());
        assert!(out.data().iter().all(|&v| v == 0.0));
    }
}
