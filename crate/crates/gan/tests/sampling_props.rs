//! Distributional and invariant properties of order sampling.

use gan::{round_to_discrete, Policy};
use numcore::rng::derive_rng;
use orderdomain::{Order, TOTAL_CLASSES};
use proptest::prelude::*;
use rand::Rng;

/// Expected emitted-order distribution for a policy under the sampler's MO
/// rule: market orders surrender their drawn price class to class 0.
fn emitted_distribution(p: &Policy) -> Vec<f64> {
    let mut dist = vec![0.0f64; TOTAL_CLASSES];
    let price = p.price_probs();
    let volume = p.volume_probs();
    for side in 0..2u8 {
        for action in 0..2u8 {
            for v in 0..40u8 {
                let base =
                    p.prob_side(side) * p.prob_action(action) * volume[v as usize];
                // non-MO: price distributed per the head
                for k in 0..40u8 {
                    let o = Order::new(side, action, 0, k, v).unwrap();
                    dist[o.class_index()] += base * p.prob_mo(0) * price[k as usize];
                }
                // MO: all price mass lands on class 0
                let o = Order::new(side, action, 1, 0, v).unwrap();
                dist[o.class_index()] += base * p.prob_mo(1);
            }
        }
    }
    dist
}

#[test]
fn uniform_policy_sampling_passes_chi_square() {
    let p = Policy::uniform();
    let expected = emitted_distribution(&p);
    let n = 1_000_000usize;
    let mut rng = derive_rng(17, "sampling.chi2");
    let mut counts = vec![0u64; TOTAL_CLASSES];
    for _ in 0..n {
        counts[p.sample(&mut rng).unwrap().order.class_index()] += 1;
    }

    let mut statistic = 0.0;
    let mut df = 0usize;
    for (idx, (&c, &q)) in counts.iter().zip(&expected).enumerate() {
        if q == 0.0 {
            assert_eq!(c, 0, "impossible cell {idx} was sampled");
        } else {
            let e = q * n as f64;
            statistic += (c as f64 - e).powi(2) / e;
            df += 1;
        }
    }
    assert_eq!(df, 6560, "2·2·40·40 non-MO cells plus 2·2·40 MO cells");
    // 99th percentile of chi-square with df = 6559 via the Wilson-Hilferty
    // cube approximation: df·(1 − 2/(9df) + 2.326·sqrt(2/(9df)))³ ≈ 6829.
    let threshold = 6829.0;
    assert!(
        statistic < threshold,
        "chi-square statistic {statistic:.1} above 99% band {threshold}"
    );
}

fn arb_policy() -> impl Strategy<Value = Policy> {
    // logits wide enough to produce highly skewed factors
    (
        -6.0f64..6.0,
        -6.0f64..6.0,
        -6.0f64..6.0,
        proptest::collection::vec(-4.0f64..4.0, 40),
        proptest::collection::vec(-4.0f64..4.0, 40),
    )
        .prop_map(|(side, action, mo, price, volume)| {
            let mut p = Policy::uniform();
            p.logit_side = side;
            p.logit_action = action;
            p.logit_mo = mo;
            p.logits_price.copy_from_slice(&price);
            p.logits_volume.copy_from_slice(&volume);
            p
        })
}

proptest! {
    #[test]
    fn sampled_orders_always_satisfy_invariants(policy in arb_policy(), seed in 0u64..1_000_000) {
        let mut rng = derive_rng(seed, "sampling.props");
        for _ in 0..64 {
            let s = policy.sample(&mut rng).unwrap();
            let o = s.order;
            prop_assert!(o.side() <= 1 && o.action() <= 1 && o.is_mo() <= 1);
            prop_assert!(o.price_class() <= 39 && o.volume_class() <= 39);
            if o.is_mo() == 1 {
                prop_assert_eq!(o.price_class(), 0);
            }
            prop_assert!(o.class_index() < TOTAL_CLASSES);
            // likelihood bookkeeping is finite and non-negative
            let nll = policy.sample_nll(&s);
            prop_assert!(nll.is_finite() && nll >= 0.0);
        }
    }

    #[test]
    fn rounded_baseline_outputs_always_valid(seed in 0u64..1_000_000) {
        let mut rng = derive_rng(seed, "sampling.round");
        for _ in 0..64 {
            let values = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(-0.49..39.49),
                rng.gen_range(-0.49..39.49),
            ];
            let o = round_to_discrete(&values).unwrap();
            prop_assert!(o.price_class() <= 39 && o.volume_class() <= 39);
            if o.is_mo() == 1 {
                prop_assert_eq!(o.price_class(), 0);
            }
        }
    }
}
