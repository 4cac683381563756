//! Distribution construction over the 12,800-class order space and the
//! evaluation metrics: KLD, per-class MSE, repeated-seed NLL statistics,
//! and policy entropy tracking.

pub mod curves;
pub mod dist;
pub mod error;
pub mod evaluate;
pub mod report;

pub use curves::{learning_curves, EpochRow, LearningCurves};
pub use dist::{kld, mse, ClassDistribution};
pub use error::EvalError;
pub use evaluate::{
    evaluate_continuous_baseline, evaluate_policy_generator, evaluate_uniform_reference,
    DEFAULT_EVAL_SEEDS,
};
pub use report::{EvalReport, MarginalHistogram, ENTROPY_BY_CHANCE, NLL_BY_CHANCE};
