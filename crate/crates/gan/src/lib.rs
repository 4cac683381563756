//! Discrete-order GAN: a policy generator trained by REINFORCE with a
//! batch-mean baseline against a spectrally normalized Wasserstein critic,
//! plus the hinge-loss variant and a continuous-output comparison model.

pub mod bandit;
pub mod baseline;
pub mod error;
pub mod layers;
pub mod losses;
pub mod nets;
pub mod policy;
pub mod train;

pub use bandit::{bandit_closed_form_gradient, bandit_gradient_estimate, reinforce_bandit_check};
pub use baseline::{round_to_discrete, ContinuousBaselineNet};
pub use error::GanError;
pub use losses::{
    advantage_weights, batch_baseline, critic_loss_value, generator_loss, LossVariant,
};
pub use nets::{CriticNet, GeneratorNet, NetWidths};
pub use policy::{Policy, PolicySample, Seed, SEED_DIM};
pub use train::{
    latest_checkpoint, train, Manifest, ModelVariant, Models, StepMetrics, TrainConfig,
    TrainOutcome, TrainState,
};
