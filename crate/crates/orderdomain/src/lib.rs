//! Discrete order representation for the 12,800-class order space, the
//! clipping and mapping rules that put raw market data on that grid, and the
//! encoding of order history into bounded network features.

pub mod condition;
pub mod error;
pub mod order;

pub use condition::{encode_condition, Condition, HISTORY_FEATURES, HISTORY_LEN, QUOTE_FEATURES};
pub use error::OrderError;
pub use order::{
    clip_to_class, discretize, Order, RawOrder, MAX_CLASS, PRICE_CLASSES, TOTAL_CLASSES,
    VOLUME_CLASSES,
};
