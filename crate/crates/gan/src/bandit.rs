//! Softmax bandit: the canonical check for the REINFORCE machinery.
//!
//! A k-class categorical policy parameterized by raw logits is trained
//! against fixed per-class rewards with exactly the update the generator
//! uses: sample a batch, subtract the batch-mean baseline, and descend the
//! weighted-NLL surrogate built by [`crate::losses::weighted_nll_loss`] over
//! the same graph ops. Against fixed rewards this must concentrate on the
//! argmax-reward class, and its sampled gradient must match the closed-form
//! softmax policy gradient.

use numcore::graph::{Graph, NodeId};
use numcore::rng::derive_rng;
use numcore::Tensor;
use rand::Rng;

use crate::error::GanError;
use crate::losses::weighted_nll_loss;

fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|&t| (t - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

fn sample_class(probs: &[f64], rng: &mut impl Rng) -> usize {
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

/// Descent gradient w.r.t. the logits of Σ_i w_i · (−log π(a_i)).
fn surrogate_grad(theta: &[f64], actions: &[usize], weights: &[f64]) -> Result<Vec<f64>, GanError> {
    let k = theta.len();
    let mut g = Graph::<f64>::new();
    let theta_id = g.leaf(Tensor::from_vec(vec![1, k], theta.to_vec())?.with_grad(true));
    let lsm = g.log_softmax(theta_id)?;
    let mut rows: Vec<NodeId> = Vec::with_capacity(actions.len());
    for &a in actions {
        let lp = g.gather_col(lsm, vec![a])?;
        let nll = g.neg(lp);
        rows.push(g.reshape(nll, vec![1, 1])?);
    }
    let stacked = g.concat_cols(&rows)?;
    let flat = g.reshape(stacked, vec![actions.len()])?;
    // weighted mean · n gives the plain sum the estimator averages later
    let loss = weighted_nll_loss(&mut g, flat, weights)?;
    let loss = g.mul_scalar(loss, actions.len() as f64);
    let grads = g.backward(loss)?;
    Ok(grads.get_or_zeros(theta_id, &[1, k]).data().to_vec())
}

/// One REINFORCE gradient estimate (ascent direction on expected reward)
/// from `samples` draws at the given logits, batch-mean baseline included.
pub fn bandit_gradient_estimate(
    rewards: &[f64],
    theta: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, GanError> {
    let probs = softmax(theta);
    let mut rng = derive_rng(seed, "bandit.grad");
    let actions: Vec<usize> = (0..samples).map(|_| sample_class(&probs, &mut rng)).collect();
    let batch_rewards: Vec<f64> = actions.iter().map(|&a| rewards[a]).collect();
    let baseline = batch_rewards.iter().sum::<f64>() / samples as f64;
    let weights: Vec<f64> = batch_rewards.iter().map(|&r| r - baseline).collect();

    // Chunked so no single graph holds 10⁵ gather nodes.
    let mut grad_sum = vec![0.0f64; theta.len()];
    for (actions_chunk, weights_chunk) in actions.chunks(4096).zip(weights.chunks(4096)) {
        let g = surrogate_grad(theta, actions_chunk, weights_chunk)?;
        for (a, &b) in grad_sum.iter_mut().zip(&g) {
            *a += b;
        }
    }
    // Ascent estimate: negate the descent gradient, average over samples.
    Ok(grad_sum.iter().map(|&v| -v / samples as f64).collect())
}

/// Closed-form ascent gradient of expected reward for a softmax policy:
/// ∂E[r]/∂θ_i = π_i (r_i − Σ_j π_j r_j).
pub fn bandit_closed_form_gradient(rewards: &[f64], theta: &[f64]) -> Vec<f64> {
    let probs = softmax(theta);
    let expected: f64 = probs.iter().zip(rewards).map(|(&p, &r)| p * r).sum();
    probs
        .iter()
        .zip(rewards)
        .map(|(&p, &r)| p * (r - expected))
        .collect()
}

/// Result of a bandit training run.
pub struct BanditRun {
    pub final_probs: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Trains the bandit with the shared weighted-NLL surrogate and plain SGD
/// at rate `lr`.
pub fn reinforce_bandit_check(
    rewards: &[f64],
    steps: usize,
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<BanditRun, GanError> {
    assert!(rewards.len() >= 2, "bandit needs at least two classes");
    assert!(batch >= 2, "batch-mean baseline needs batch >= 2");
    let mut theta = vec![0.0f64; rewards.len()];
    let mut rng = derive_rng(seed, "bandit.train");

    for _ in 0..steps {
        let probs = softmax(&theta);
        let actions: Vec<usize> = (0..batch).map(|_| sample_class(&probs, &mut rng)).collect();
        let batch_rewards: Vec<f64> = actions.iter().map(|&a| rewards[a]).collect();
        let baseline = batch_rewards.iter().sum::<f64>() / batch as f64;
        let weights: Vec<f64> = batch_rewards.iter().map(|&r| r - baseline).collect();
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let grad = surrogate_grad(&theta, &actions, &weights)?;
        for (t, &d) in theta.iter_mut().zip(&grad) {
            // mean over the batch, as in the generator loss
            *t -= lr * d / batch as f64;
        }
    }
    Ok(BanditRun {
        final_probs: softmax(&theta),
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_bandit_concentrates_on_better_reward() {
        let run = reinforce_bandit_check(&[0.0, 1.0], 10_000, 0.1, 32, 7).unwrap();
        assert!(
            run.final_probs[1] > 0.99,
            "p(best) = {} after training",
            run.final_probs[1]
        );
    }

    #[test]
    fn equal_rewards_leave_policy_exactly_unchanged() {
        let run = reinforce_bandit_check(&[0.5, 0.5, 0.5], 10_000, 0.1, 16, 9).unwrap();
        for (p, t) in run.final_probs.iter().zip(&run.theta) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
            assert_eq!(*t, 0.0, "baseline cancellation must be exact");
        }
    }

    #[test]
    fn sampled_gradient_matches_closed_form() {
        let rewards = [0.1, 0.7, 0.4];
        let theta = [0.2, -0.1, 0.05];
        let estimate = bandit_gradient_estimate(&rewards, &theta, 100_000, 3).unwrap();
        let exact = bandit_closed_form_gradient(&rewards, &theta);
        let err_norm: f64 = estimate
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let exact_norm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            err_norm / exact_norm < 0.02,
            "relative error {}",
            err_norm / exact_norm
        );
    }
}
