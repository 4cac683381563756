//! Adversarial losses and the policy-gradient generator objective.
//!
//! Critic: plain Wasserstein form `mean(C(fake)) − mean(C(real))`, or the
//! hinge form `mean(max(1 + C(fake), 0)) + mean(max(1 − C(real), 0))`.
//!
//! Generator: per-sample loss `(C(x̃) − B) · NLL(x̃)` where `B` is the batch
//! mean of fake critic scores and the gradient flows only through the NLL —
//! critic scores enter as constants, since the sampling step severed the
//! graph anyway. The hinge variant clips the centered advantage at the same
//! one-sided margin the critic trains with, `max(1 + (C − B), 0)`, which
//! keeps the generator update alive when the critic saturates at zero — the
//! plain variant's gradient vanishes there exactly.

use numcore::graph::{Graph, NodeId};
use numcore::{Real, Tensor};

use crate::error::GanError;
use crate::nets::PolicyHeads;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    Plain,
    Hinge,
}

impl LossVariant {
    pub fn tag(self) -> &'static str {
        match self {
            LossVariant::Plain => "wasserstein",
            LossVariant::Hinge => "hinge",
        }
    }
}

/// Arithmetic mean of a batch of fake critic scores: the REINFORCE baseline.
///
/// Computed as `c₀ + mean(cᵢ − c₀)` so a batch of equal scores yields the
/// score itself exactly and the centered advantages cancel to literal zero.
pub fn batch_baseline(c_fake: &[f64]) -> f64 {
    assert!(!c_fake.is_empty(), "baseline of an empty batch");
    let anchor = c_fake[0];
    let deviation: f64 = c_fake.iter().map(|&c| c - anchor).sum::<f64>() / c_fake.len() as f64;
    anchor + deviation
}

/// Per-sample generator loss; gradient flows only through `nll`.
pub fn generator_loss(c_fake: f64, baseline: f64, nll: f64) -> f64 {
    (c_fake - baseline) * nll
}

/// Per-sample reward weights for the generator update.
pub fn advantage_weights(variant: LossVariant, c_fake: &[f64]) -> Vec<f64> {
    let b = batch_baseline(c_fake);
    c_fake
        .iter()
        .map(|&c| match variant {
            LossVariant::Plain => c - b,
            LossVariant::Hinge => (1.0 + (c - b)).max(0.0),
        })
        .collect()
}

/// Value-side critic loss, for metrics and tests.
pub fn critic_loss_value(variant: LossVariant, c_fake: &[f64], c_real: &[f64]) -> f64 {
    assert!(!c_fake.is_empty() && !c_real.is_empty(), "empty critic batch");
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    match variant {
        LossVariant::Plain => mean(c_fake) - mean(c_real),
        LossVariant::Hinge => {
            mean(&c_fake.iter().map(|&c| (1.0 + c).max(0.0)).collect::<Vec<_>>())
                + mean(&c_real.iter().map(|&c| (1.0 - c).max(0.0)).collect::<Vec<_>>())
        }
    }
}

/// Graph critic loss over `[b]` score nodes.
pub fn critic_loss_node<F: Real>(
    g: &mut Graph<F>,
    variant: LossVariant,
    c_fake: NodeId,
    c_real: NodeId,
) -> Result<NodeId, GanError> {
    match variant {
        LossVariant::Plain => {
            let mf = g.mean_all(c_fake);
            let mr = g.mean_all(c_real);
            Ok(g.sub(mf, mr)?)
        }
        LossVariant::Hinge => {
            let one = F::one();
            let fake_shift = g.add_scalar(c_fake, one);
            let fake_hinge = g.leaky_relu(fake_shift, F::zero());
            let fake_term = g.mean_all(fake_hinge);
            let real_neg = g.neg(c_real);
            let real_shift = g.add_scalar(real_neg, one);
            let real_hinge = g.leaky_relu(real_shift, F::zero());
            let real_term = g.mean_all(real_hinge);
            Ok(g.add(fake_term, real_term)?)
        }
    }
}

/// Sampled field values (side, action, MO, price class, volume class); the
/// price class is the drawn one, not the MO-forced one.
pub type SampledFields = (u8, u8, u8, u8, u8);

/// Per-sample NLL node `[b]` for given field values under the policy heads.
///
/// Binary factors select `log σ(±logit)` by multiplying the logit with a
/// ±1 constant; the 40-way factors gather from a log-softmax.
pub fn nll_node<F: Real>(
    g: &mut Graph<F>,
    heads: &PolicyHeads,
    fields: &[SampledFields],
) -> Result<NodeId, GanError> {
    let batch = fields.len();
    let sign = |pick: &dyn Fn(&SampledFields) -> u8| -> Tensor<F> {
        Tensor::from_vec(
            vec![batch, 1],
            fields
                .iter()
                .map(|f| if pick(f) == 1 { F::one() } else { -F::one() })
                .collect(),
        )
        .expect("sign tensor shape")
    };

    let mut lp_terms: Vec<NodeId> = Vec::with_capacity(5);
    for (head, pick) in [
        (heads.side, &(|f: &SampledFields| f.0) as &dyn Fn(&SampledFields) -> u8),
        (heads.action, &|f: &SampledFields| f.1),
        (heads.mo, &|f: &SampledFields| f.2),
    ] {
        let s = g.constant(sign(pick));
        let signed = g.mul(head, s)?;
        let lp = g.log_sigmoid(signed);
        lp_terms.push(g.reshape(lp, vec![batch])?);
    }

    let price_lsm = g.log_softmax(heads.price)?;
    lp_terms.push(g.gather_col(price_lsm, fields.iter().map(|f| f.3 as usize).collect())?);
    let vol_lsm = g.log_softmax(heads.volume)?;
    lp_terms.push(g.gather_col(vol_lsm, fields.iter().map(|f| f.4 as usize).collect())?);

    let mut total = lp_terms[0];
    for &t in &lp_terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(g.neg(total))
}

/// Mean over the batch of `weight_i · nll_i` with constant weights: the
/// REINFORCE surrogate whose gradient is the policy-gradient update.
pub fn weighted_nll_loss<F: Real>(
    g: &mut Graph<F>,
    nll: NodeId,
    weights: &[f64],
) -> Result<NodeId, GanError> {
    let w = Tensor::from_f64_slice(vec![weights.len()], weights)?;
    let w = g.constant(w);
    let prod = g.mul(nll, w)?;
    Ok(g.mean_all(prod))
}
