//! Order-stream ingestion, temporal splitting, window batching, and a
//! synthetic market generator with a closed-form ground-truth distribution.

pub mod batch;
pub mod error;
pub mod split;
pub mod stream;
pub mod synth;
pub mod windows;

pub use batch::Batcher;
pub use error::DataError;
pub use split::temporal_split;
pub use stream::{load_orders, save_orders, write_atomic, OrderStream, StreamMeta, CSV_HEADER};
pub use synth::{exact_class_distribution, geometric_class_probs, synth_market, StateTable, SynthConfig};
pub use windows::{make_windows, WindowPair};
