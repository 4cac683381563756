//! Repeated-seed generator evaluation.
//!
//! For every test situation the generator is evaluated `n_seeds` times with
//! distinct latent seeds; each draw contributes one fake order to the fake
//! class distribution and one NLL/entropy observation. The across-seed
//! standard deviation of the real order's NLL, averaged over situations, is
//! the mode-collapse monitor: near-zero means the policy ignores its seed.
//!
//! Randomness fans out per situation from `(master_seed, situation index)`,
//! so reports are deterministic and independent of evaluation order.

use dataflow::WindowPair;
use gan::nets::GeneratorNet;
use gan::{ContinuousBaselineNet, Policy, Seed};
use numcore::graph::Mode;
use numcore::rng::derive_rng_indexed;
use numcore::Real;
use orderdomain::{Condition, TOTAL_CLASSES};

use crate::dist::{kld, mse, ClassDistribution};
use crate::error::EvalError;
use crate::report::{marginals_of, EvalReport};

pub const EVAL_STREAM_LABEL: &str = "eval";
pub const DEFAULT_EVAL_SEEDS: usize = 100;

/// Anything that turns (situation, condition, seeds) into per-seed policies.
/// Trained generators are the production source; tests plug in analytic
/// references such as the perfect or uniform policy.
pub trait PolicySource<F: Real> {
    fn policies(
        &mut self,
        situation: usize,
        cond: &Condition,
        seeds: &[Seed<F>],
    ) -> Result<Vec<Policy>, EvalError>;
}

impl<F: Real> PolicySource<F> for GeneratorNet<F> {
    fn policies(
        &mut self,
        _situation: usize,
        cond: &Condition,
        seeds: &[Seed<F>],
    ) -> Result<Vec<Policy>, EvalError> {
        let conds = vec![cond; seeds.len()];
        Ok(GeneratorNet::policies(self, &conds, seeds, Mode::Eval)?)
    }
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Evaluates a policy generator over test windows.
pub fn evaluate_policy_generator<F: Real>(
    gen: &mut impl PolicySource<F>,
    windows: &[WindowPair],
    n_seeds: usize,
    master_seed: u64,
) -> Result<EvalReport, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    assert!(n_seeds >= 1);

    let mut fake_counts = vec![0u64; TOTAL_CLASSES];
    let mut nll_sum = 0.0;
    let mut nll_std_sum = 0.0;
    let mut entropy_sum = 0.0;

    for (i, (cond, real)) in windows.iter().enumerate() {
        let mut rng = derive_rng_indexed(master_seed, EVAL_STREAM_LABEL, i as u64);
        let seeds: Vec<Seed<F>> = (0..n_seeds).map(|_| Seed::sample(&mut rng)).collect();
        let policies = gen.policies(i, cond, &seeds)?;

        let mut nlls = Vec::with_capacity(n_seeds);
        for p in &policies {
            let sample = p.sample(&mut rng)?;
            fake_counts[sample.order.class_index()] += 1;
            nlls.push(p.nll(real));
            entropy_sum += p.entropy_bits();
        }
        let mean = nlls.iter().sum::<f64>() / nlls.len() as f64;
        nll_sum += mean;
        nll_std_sum += population_std(&nlls, mean);
    }

    let situations = windows.len();
    let draws = (situations * n_seeds) as u64;
    let real_dist = ClassDistribution::empirical(windows.iter().map(|(_, o)| o));
    let fake_dist = ClassDistribution::from_counts(&fake_counts)?;

    Ok(EvalReport {
        kld: kld(&real_dist, &fake_dist),
        mse: mse(&real_dist, &fake_dist),
        nll_mean: nll_sum / situations as f64,
        nll_std_mean: nll_std_sum / situations as f64,
        entropy_mean: entropy_sum / draws as f64,
        seeds: n_seeds,
        situations,
        fake_samples: draws,
        marginals: marginals_of(&real_dist, &fake_dist, &fake_counts),
    })
}

/// Evaluates the continuous baseline: emissions are rounded to discrete
/// orders before histogramming; NLL and entropy are undefined for it.
pub fn evaluate_continuous_baseline<F: Real>(
    gen: &mut ContinuousBaselineNet<F>,
    windows: &[WindowPair],
    n_seeds: usize,
    master_seed: u64,
) -> Result<EvalReport, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut fake_counts = vec![0u64; TOTAL_CLASSES];
    for (i, (cond, _)) in windows.iter().enumerate() {
        let mut rng = derive_rng_indexed(master_seed, EVAL_STREAM_LABEL, i as u64);
        let seeds: Vec<Seed<F>> = (0..n_seeds).map(|_| Seed::sample(&mut rng)).collect();
        let conds = vec![cond; n_seeds];
        for row in gen.emit(&conds, &seeds, Mode::Eval)? {
            let order = gan::round_to_discrete(&row)?;
            fake_counts[order.class_index()] += 1;
        }
    }
    let situations = windows.len();
    let draws = (situations * n_seeds) as u64;
    let real_dist = ClassDistribution::empirical(windows.iter().map(|(_, o)| o));
    let fake_dist = ClassDistribution::from_counts(&fake_counts)?;
    Ok(EvalReport {
        kld: kld(&real_dist, &fake_dist),
        mse: mse(&real_dist, &fake_dist),
        nll_mean: f64::NAN,
        nll_std_mean: f64::NAN,
        entropy_mean: f64::NAN,
        seeds: n_seeds,
        situations,
        fake_samples: draws,
        marginals: marginals_of(&real_dist, &fake_dist, &fake_counts),
    })
}

/// Reference evaluation for a uniform policy over the same protocol; used
/// as the by-chance yardstick for divergences.
pub fn evaluate_uniform_reference(
    windows: &[WindowPair],
    n_seeds: usize,
    master_seed: u64,
) -> Result<EvalReport, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let uniform = gan::Policy::uniform();
    let mut fake_counts = vec![0u64; TOTAL_CLASSES];
    let mut nll_sum = 0.0;
    let mut nll_std_sum = 0.0;
    let mut entropy_sum = 0.0;
    for (i, (_, real)) in windows.iter().enumerate() {
        let mut rng = derive_rng_indexed(master_seed, EVAL_STREAM_LABEL, i as u64);
        let mut nlls = Vec::with_capacity(n_seeds);
        for _ in 0..n_seeds {
            let sample = uniform.sample(&mut rng)?;
            fake_counts[sample.order.class_index()] += 1;
            nlls.push(uniform.nll(real));
            entropy_sum += uniform.entropy_bits();
        }
        let mean = nlls.iter().sum::<f64>() / nlls.len() as f64;
        nll_sum += mean;
        nll_std_sum += population_std(&nlls, mean);
    }
    let situations = windows.len();
    let draws = (situations * n_seeds) as u64;
    let real_dist = ClassDistribution::empirical(windows.iter().map(|(_, o)| o));
    let fake_dist = ClassDistribution::from_counts(&fake_counts)?;
    Ok(EvalReport {
        kld: kld(&real_dist, &fake_dist),
        mse: mse(&real_dist, &fake_dist),
        nll_mean: nll_sum / situations as f64,
        nll_std_mean: nll_std_sum / situations as f64,
        entropy_mean: entropy_sum / draws as f64,
        seeds: n_seeds,
        situations,
        fake_samples: draws,
        marginals: marginals_of(&real_dist, &fake_dist, &fake_counts),
    })
}
