//! Minimal dense-tensor numeric core: reverse-mode differentiation over the
//! layer set the order-generation networks use, spectral normalization, the
//! Adam optimizer, and a versioned binary checkpoint format.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod real;
pub mod rng;
pub mod sn;
pub mod store;
pub mod tensor;

pub use error::NumError;
pub use graph::{ConvSpec, Gradients, Graph, Mode, NodeId, PadMode};
pub use optim::{AdamConfig, AdamState};
pub use real::{Dtype, Real};
pub use sn::{spectral_normalize, spectral_normalize_node, SpectralNormState};
pub use store::ParamStore;
pub use tensor::Tensor;
