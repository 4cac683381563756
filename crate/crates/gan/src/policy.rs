//! The factorized order policy and its sampling, likelihood, and entropy.
//!
//! A policy is five independent factors: three binary logits (side,
//! new/cancel, market-order flag, each a single logit expanded to two
//! classes) and two 40-way logit heads (price, volume). Joint probabilities
//! are products of factor probabilities over the full 12,800-cell cube.
//!
//! Sampling draws every factor — including the price class when the MO flag
//! comes up true, so the likelihood stays a proper five-factor product — but
//! the emitted order carries price class 0 whenever it is a market order.

use orderdomain::{Order, OrderError, PRICE_CLASSES, TOTAL_CLASSES, VOLUME_CLASSES};
use rand::Rng;

use numcore::Real;

pub const SEED_DIM: usize = 128;

/// Latent input to the generator: 128 standard-normal values.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed<F: Real> {
    values: Vec<F>,
}

impl<F: Real> Seed<F> {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Seed {
            values: (0..SEED_DIM).map(|_| F::sample_standard_normal(rng)).collect(),
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }
}

/// Policy logits in evaluation precision (f64), detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub logit_side: f64,
    pub logit_action: f64,
    pub logit_mo: f64,
    pub logits_price: [f64; PRICE_CLASSES],
    pub logits_volume: [f64; VOLUME_CLASSES],
}

impl Policy {
    /// All-zero logits: every factor uniform.
    pub fn uniform() -> Self {
        Policy {
            logit_side: 0.0,
            logit_action: 0.0,
            logit_mo: 0.0,
            logits_price: [0.0; PRICE_CLASSES],
            logits_volume: [0.0; VOLUME_CLASSES],
        }
    }

    pub fn prob_side(&self, value: u8) -> f64 {
        binary_prob(self.logit_side, value)
    }

    pub fn prob_action(&self, value: u8) -> f64 {
        binary_prob(self.logit_action, value)
    }

    pub fn prob_mo(&self, value: u8) -> f64 {
        binary_prob(self.logit_mo, value)
    }

    pub fn price_probs(&self) -> [f64; PRICE_CLASSES] {
        softmax(&self.logits_price)
    }

    pub fn volume_probs(&self) -> [f64; VOLUME_CLASSES] {
        softmax(&self.logits_volume)
    }

    /// Joint probability of one cell of the 12,800-class cube under the
    /// five-factor product measure.
    pub fn joint_prob(&self, side: u8, action: u8, is_mo: u8, price: u8, volume: u8) -> f64 {
        self.prob_side(side)
            * self.prob_action(action)
            * self.prob_mo(is_mo)
            * self.price_probs()[price as usize]
            * self.volume_probs()[volume as usize]
    }

    /// Negative natural-log likelihood of the five given field values.
    pub fn nll_fields(&self, side: u8, action: u8, is_mo: u8, price: u8, volume: u8) -> f64 {
        let lp = log_sigmoid(signed(self.logit_side, side))
            + log_sigmoid(signed(self.logit_action, action))
            + log_sigmoid(signed(self.logit_mo, is_mo))
            + log_softmax_at(&self.logits_price, price as usize)
            + log_softmax_at(&self.logits_volume, volume as usize);
        -lp
    }

    /// NLL of an order; a real market order carries price class 0, which is
    /// exactly the class its likelihood uses.
    pub fn nll(&self, order: &Order) -> f64 {
        self.nll_fields(
            order.side(),
            order.action(),
            order.is_mo(),
            order.price_class(),
            order.volume_class(),
        )
    }

    /// Shannon entropy of the joint policy in bits: the sum of the five
    /// factor entropies, which equals the 12,800-term sum by independence.
    pub fn entropy_bits(&self) -> f64 {
        binary_entropy_bits(sigmoid(self.logit_side))
            + binary_entropy_bits(sigmoid(self.logit_action))
            + binary_entropy_bits(sigmoid(self.logit_mo))
            + categorical_entropy_bits(&self.price_probs())
            + categorical_entropy_bits(&self.volume_probs())
    }

    /// Weighted sampling of every factor. Draw order is fixed: side, action,
    /// MO, price, volume.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<PolicySample, OrderError> {
        let side = (rng.gen::<f64>() < sigmoid(self.logit_side)) as u8;
        let action = (rng.gen::<f64>() < sigmoid(self.logit_action)) as u8;
        let is_mo = (rng.gen::<f64>() < sigmoid(self.logit_mo)) as u8;
        let price = sample_categorical(&self.price_probs(), rng) as u8;
        let volume = sample_categorical(&self.volume_probs(), rng) as u8;
        let emitted_price = if is_mo == 1 { 0 } else { price };
        Ok(PolicySample {
            order: Order::new(side, action, is_mo, emitted_price, volume)?,
            sampled_price_class: price,
        })
    }

    /// NLL of a sample under this policy, using the *sampled* price class —
    /// the likelihood bookkeeping ignores the MO price override.
    pub fn sample_nll(&self, sample: &PolicySample) -> f64 {
        let o = &sample.order;
        self.nll_fields(
            o.side(),
            o.action(),
            o.is_mo(),
            sample.sampled_price_class,
            o.volume_class(),
        )
    }

    /// Dense joint distribution over all 12,800 cells (product measure).
    pub fn joint_distribution(&self) -> Vec<f64> {
        let ps = [1.0 - sigmoid(self.logit_side), sigmoid(self.logit_side)];
        let pa = [1.0 - sigmoid(self.logit_action), sigmoid(self.logit_action)];
        let pm = [1.0 - sigmoid(self.logit_mo), sigmoid(self.logit_mo)];
        let pp = self.price_probs();
        let pv = self.volume_probs();
        let mut out = Vec::with_capacity(TOTAL_CLASSES);
        for &s in &ps {
            for &a in &pa {
                for &m in &pm {
                    for &p in pp.iter() {
                        for &v in pv.iter() {
                            out.push(s * a * m * p * v);
                        }
                    }
                }
            }
        }
        out
    }
}

/// A drawn order plus the price class that was actually sampled (they differ
/// only for market orders, whose emitted price class is forced to 0).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub order: Order,
    pub sampled_price_class: u8,
}

fn signed(logit: f64, value: u8) -> f64 {
    if value == 1 {
        logit
    } else {
        -logit
    }
}

fn binary_prob(logit: f64, value: u8) -> f64 {
    sigmoid(signed(logit, value))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

fn softmax<const N: usize>(logits: &[f64; N]) -> [f64; N] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N];
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    out
}

fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    logits[index] - max - denom.ln()
}

fn binary_entropy_bits(p: f64) -> f64 {
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    h
}

fn categorical_entropy_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use numcore::rng::derive_rng;
    use orderdomain::TOTAL_CLASSES;

    #[test]
    fn uniform_policy_by_chance_values() {
        let p = Policy::uniform();
        let o = Order::new(1, 0, 0, 7, 21).unwrap();
        let expected_nll = (TOTAL_CLASSES as f64).ln();
        assert!((p.nll(&o) - expected_nll).abs() < 1e-12);
        assert!((p.nll(&o) - 9.4572).abs() < 1e-3);
        let expected_entropy = (TOTAL_CLASSES as f64).log2();
        assert!((p.entropy_bits() - expected_entropy).abs() < 1e-12);
        assert!((p.entropy_bits() - 13.6438).abs() < 1e-3);
    }

    #[test]
    fn deterministic_policy_zero_nll_and_entropy() {
        let mut p = Policy::uniform();
        p.logit_side = 200.0;
        p.logit_action = -200.0;
        p.logit_mo = -200.0;
        p.logits_price[5] = 500.0;
        p.logits_volume[9] = 500.0;
        let o = Order::new(1, 0, 0, 5, 9).unwrap();
        assert!(p.nll(&o).abs() < 1e-9);
        assert!(p.entropy_bits().abs() < 1e-9);
    }

    #[test]
    fn known_factor_product() {
        // factors (0.5, 0.5, 0.5, 0.1, 0.05) → −ln(0.000625)
        let mut p = Policy::uniform();
        // 40-way head with prob 0.1 on class 0: logit ln(0.1) vs ln(0.9/39) elsewhere
        let rest = (0.9f64 / 39.0).ln();
        p.logits_price = [rest; 40];
        p.logits_price[0] = 0.1f64.ln();
        p.logits_volume = [((1.0 - 0.05f64) / 39.0).ln(); 40];
        p.logits_volume[0] = 0.05f64.ln();
        let o = Order::new(1, 0, 0, 0, 0).unwrap();
        let nll = p.nll(&o);
        assert!((nll - 7.3778).abs() < 1e-4, "nll = {nll}");
        assert!((nll + 0.000625f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn entropy_factor_sum_matches_brute_force() {
        let mut rng = derive_rng(3, "policy.entropy");
        for _ in 0..5 {
            let mut p = Policy::uniform();
            p.logit_side = rng.gen_range(-2.0..2.0);
            p.logit_action = rng.gen_range(-2.0..2.0);
            p.logit_mo = rng.gen_range(-2.0..2.0);
            for l in p.logits_price.iter_mut() {
                *l = rng.gen_range(-2.0..2.0);
            }
            for l in p.logits_volume.iter_mut() {
                *l = rng.gen_range(-2.0..2.0);
            }
            let brute: f64 = p
                .joint_distribution()
                .iter()
                .filter(|&&q| q > 0.0)
                .map(|&q| -q * q.log2())
                .sum();
            assert!((p.entropy_bits() - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn joint_distribution_normalizes_and_matches_nll() {
        let mut rng = derive_rng(4, "policy.joint");
        let mut p = Policy::uniform();
        p.logit_side = 0.3;
        p.logit_mo = -0.7;
        for l in p.logits_price.iter_mut() {
            *l = rng.gen_range(-1.0..1.0);
        }
        let joint = p.joint_distribution();
        let total: f64 = joint.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);

        let o = Order::new(1, 1, 0, 3, 17).unwrap();
        let q = joint[o.class_index()];
        assert!((p.nll(&o) + q.ln()).abs() < 1e-9);
    }

    #[test]
    fn one_hot_policy_always_samples_that_order() {
        let mut p = Policy::uniform();
        p.logit_side = 300.0;
        p.logit_action = 300.0;
        p.logit_mo = -300.0;
        p.logits_price[13] = 600.0;
        p.logits_volume[2] = 600.0;
        let mut rng = derive_rng(5, "policy.onehot");
        let want = Order::new(1, 1, 0, 13, 2).unwrap();
        for _ in 0..200 {
            assert_eq!(p.sample(&mut rng).unwrap().order, want);
        }
    }

    #[test]
    fn fixed_rng_reproduces_sample() {
        let mut p = Policy::uniform();
        p.logit_side = 0.4;
        let mut a = derive_rng(6, "policy.repro");
        let mut b = derive_rng(6, "policy.repro");
        for _ in 0..50 {
            assert_eq!(p.sample(&mut a).unwrap(), p.sample(&mut b).unwrap());
        }
    }

    #[test]
    fn mo_sample_emits_price_zero_but_keeps_drawn_class() {
        let mut p = Policy::uniform();
        p.logit_mo = 300.0; // always MO
        p.logits_price[7] = 600.0; // price head always draws 7
        let mut rng = derive_rng(7, "policy.mo");
        let s = p.sample(&mut rng).unwrap();
        assert_eq!(s.order.is_mo(), 1);
        assert_eq!(s.order.price_class(), 0);
        assert_eq!(s.sampled_price_class, 7);
        // likelihood bookkeeping uses the drawn class
        let nll = p.sample_nll(&s);
        let direct = p.nll_fields(s.order.side(), s.order.action(), 1, 7, s.order.volume_class());
        assert_eq!(nll, direct);
    }

    #[test]
    fn seed_has_128_dimensions() {
        let mut rng = derive_rng(8, "policy.seed");
        let s = Seed::<f32>::sample(&mut rng);
        assert_eq!(s.values().len(), SEED_DIM);
    }
}
