//! Central finite differences for verifying analytic gradients.
//!
//! The checker only calls the forward evaluation, never `backward`, so it
//! stays independent of the differentiation code it validates. Run it at
//! `f64` — the default step is sized for 64-bit roundoff.

use crate::real::Real;

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn central_diff_grad<F: Real>(x: &[F], mut f: impl FnMut(&[F]) -> F) -> Vec<F> {
    let base_h = F::from_f64(6e-6);
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = base_h * x[i].abs().max(F::one());
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point);
        point[i] = orig - h;
        let minus = f(&point);
        point[i] = orig;
        grad.push((plus - minus) / (h + h));
    }
    grad
}

/// `|a − b| / max(|a|, |b|, floor)` — the floor keeps near-zero gradients
/// from amplifying finite-difference roundoff into spurious failures.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst relative error between analytic and numeric gradient vectors.
pub fn max_rel_err<F: Real>(analytic: &[F], numeric: &[F], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a.as_f64(), n.as_f64(), floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        // f(x) = Σ x², ∇f = 2x
        let x = [0.5f64, -1.25, 2.0];
        let num = central_diff_grad(&x, |p| p.iter().map(|v| v * v).sum());
        let analytic = [1.0, -2.5, 4.0];
        assert!(max_rel_err(&analytic, &num, 1e-6) < 1e-8);
    }
}
