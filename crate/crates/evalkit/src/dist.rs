//! Distributions over the 12,800-class order space and the divergence
//! metrics between them.
//!
//! Divergences use base-2 logarithms; the KLD direction is D(real ‖ fake).
//! A class present in the real distribution but absent from the fake one
//! makes the KLD infinite — deliberately unsmoothed, since mode-collapsed
//! generators are supposed to show up as ∞.

use std::io::Write;
use std::path::Path;

use orderdomain::{Order, TOTAL_CLASSES};

use crate::error::EvalError;

/// Probabilities over all 12,800 classes, or the explicit all-zero marker
/// for "no data".
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    sample_count: u64,
}

impl ClassDistribution {
    /// The explicit empty marker.
    pub fn empty() -> Self {
        ClassDistribution {
            probs: vec![0.0; TOTAL_CLASSES],
            sample_count: 0,
        }
    }

    pub fn from_probs(probs: Vec<f64>, sample_count: u64) -> Result<Self, EvalError> {
        if probs.len() != TOTAL_CLASSES {
            return Err(EvalError::BadDistribution(format!(
                "expected {TOTAL_CLASSES} classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(EvalError::BadDistribution("negative or non-finite mass".to_string()));
        }
        let total: f64 = probs.iter().sum();
        if total != 0.0 && (total - 1.0).abs() > 1e-9 {
            return Err(EvalError::BadDistribution(format!("mass sums to {total}")));
        }
        Ok(ClassDistribution { probs, sample_count })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self, EvalError> {
        if counts.len() != TOTAL_CLASSES {
            return Err(EvalError::BadDistribution(format!(
                "expected {TOTAL_CLASSES} classes, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Ok(Self::empty());
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(ClassDistribution {
            probs,
            sample_count: total,
        })
    }

    /// Normalized class counts of a collection of orders; an empty
    /// collection yields the empty marker.
    pub fn empirical<'a>(orders: impl IntoIterator<Item = &'a Order>) -> Self {
        let mut counts = vec![0u64; TOTAL_CLASSES];
        let mut total = 0u64;
        for o in orders {
            counts[o.class_index()] += 1;
            total += 1;
        }
        if total == 0 {
            return Self::empty();
        }
        ClassDistribution {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            sample_count: total,
        }
    }

    pub fn is_empty_marker(&self) -> bool {
        self.sample_count == 0 && self.probs.iter().all(|&p| p == 0.0)
    }

    pub fn prob(&self, class_index: usize) -> f64 {
        self.probs[class_index]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Writes `class,prob` rows for the nonzero classes. Probabilities are
    /// printed shortest-roundtrip, so loading reproduces them exactly.
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = String::from("class,prob\n");
        for (idx, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                out.push_str(&format!("{idx},{p}\n"));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| EvalError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        let mut probs = vec![0.0f64; TOTAL_CLASSES];
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line.trim() != "class,prob" {
                    return Err(EvalError::BadDistribution(format!(
                        "bad header {line:?} in {}",
                        path.display()
                    )));
                }
                continue;
            }
            let bad = |detail: String| EvalError::BadLogLine {
                path: path.display().to_string(),
                line: lineno + 1,
                detail,
            };
            let (idx, p) = line
                .split_once(',')
                .ok_or_else(|| bad("expected class,prob".to_string()))?;
            let idx: usize = idx.trim().parse().map_err(|e| bad(format!("class: {e}")))?;
            if idx >= TOTAL_CLASSES {
                return Err(bad(format!("class {idx} out of range")));
            }
            probs[idx] = p.trim().parse().map_err(|e| bad(format!("prob: {e}")))?;
        }
        Self::from_probs(probs, 0)
    }
}

/// Kullback–Leibler divergence D(P ‖ Q) in bits. Terms with P(x) = 0
/// contribute nothing; any x with P(x) > 0 and Q(x) = 0 makes it +∞.
pub fn kld(p: &ClassDistribution, q: &ClassDistribution) -> f64 {
    let mut total = 0.0;
    for (&pp, &qq) in p.probs.iter().zip(&q.probs) {
        if pp == 0.0 {
            continue;
        }
        if qq == 0.0 {
            return f64::INFINITY;
        }
        total += pp * (pp / qq).log2();
    }
    total
}

/// Mean squared difference over all 12,800 classes.
pub fn mse(p: &ClassDistribution, q: &ClassDistribution) -> f64 {
    let total: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    total / TOTAL_CLASSES as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(idx: usize) -> ClassDistribution {
        let mut probs = vec![0.0; TOTAL_CLASSES];
        probs[idx] = 1.0;
        ClassDistribution::from_probs(probs, 1).unwrap()
    }

    #[test]
    fn empirical_one_order_is_one_hot() {
        let o = Order::new(1, 0, 0, 5, 9).unwrap();
        let orders = vec![o; 7];
        let d = ClassDistribution::empirical(&orders);
        assert_eq!(d.prob(o.class_index()), 1.0);
        assert_eq!(d.support_size(), 1);
        assert_eq!(d.sample_count(), 7);
    }

    #[test]
    fn empirical_all_classes_once_is_uniform() {
        let mut counts = vec![1u64; TOTAL_CLASSES];
        counts[0] = 1;
        let d = ClassDistribution::from_counts(&counts).unwrap();
        for idx in [0, 1, 6399, 12799] {
            assert!((d.prob(idx) - 1.0 / TOTAL_CLASSES as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_matches_hand_count() {
        let a = Order::new(0, 0, 0, 0, 0).unwrap();
        let b = Order::new(1, 0, 0, 2, 3).unwrap();
        let c = Order::new(1, 1, 1, 0, 39).unwrap();
        let orders = [a, a, a, b, b, c, a, b, c, a];
        let d = ClassDistribution::empirical(&orders);
        assert!((d.prob(a.class_index()) - 0.5).abs() < 1e-15);
        assert!((d.prob(b.class_index()) - 0.3).abs() < 1e-15);
        assert!((d.prob(c.class_index()) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_input_yields_marker() {
        let d = ClassDistribution::empirical(std::iter::empty::<&Order>());
        assert!(d.is_empty_marker());
    }

    #[test]
    fn kld_identical_is_zero() {
        let d = one_hot(42);
        assert_eq!(kld(&d, &d), 0.0);
    }

    #[test]
    fn kld_support_violation_is_infinite() {
        let p = one_hot(42);
        let q = one_hot(43);
        assert!(kld(&p, &q).is_infinite());
    }

    #[test]
    fn kld_two_class_value() {
        // P = (0.5, 0.5), Q = (0.25, 0.75) folded into the big space
        let mut pp = vec![0.0; TOTAL_CLASSES];
        pp[0] = 0.5;
        pp[1] = 0.5;
        let mut qq = vec![0.0; TOTAL_CLASSES];
        qq[0] = 0.25;
        qq[1] = 0.75;
        let p = ClassDistribution::from_probs(pp, 0).unwrap();
        let q = ClassDistribution::from_probs(qq, 0).unwrap();
        let expect = 0.5 * (0.5f64 / 0.25).log2() + 0.5 * (0.5f64 / 0.75).log2();
        assert!((kld(&p, &q) - expect).abs() < 1e-12);
        assert!((kld(&p, &q) - 0.20752).abs() < 1e-5);
    }

    #[test]
    fn mse_one_hot_disagreement() {
        let p = one_hot(0);
        let q = one_hot(1);
        let expect = 2.0 / TOTAL_CLASSES as f64;
        assert!((mse(&p, &q) - expect).abs() < 1e-18);
        assert!((mse(&p, &q) - 1.5625e-4).abs() < 1e-9);
    }

    #[test]
    fn save_load_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let mut probs = vec![0.0; TOTAL_CLASSES];
        probs[3] = 0.125;
        probs[77] = 0.5;
        probs[12799] = 0.375;
        let d = ClassDistribution::from_probs(probs, 0).unwrap();
        d.save(&path).unwrap();
        let loaded = ClassDistribution::load(&path).unwrap();
        assert_eq!(d.probs(), loaded.probs());
    }
}
