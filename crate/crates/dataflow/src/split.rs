//! Chronological 8:1:1 split.

use crate::error::DataError;
use crate::stream::OrderStream;

pub const MIN_SPLIT_LEN: usize = 30;

/// Splits a stream into contiguous train/valid/test segments of sizes
/// ⌊0.8n⌋ / ⌊0.1n⌋ / remainder, in stream order, no shuffling.
pub fn temporal_split(
    stream: &OrderStream,
) -> Result<(OrderStream, OrderStream, OrderStream), DataError> {
    let n = stream.len();
    if n < MIN_SPLIT_LEN {
        return Err(DataError::TooShort {
            needed: MIN_SPLIT_LEN,
            got: n,
        });
    }
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let train = stream.slice(0, n_train);
    let valid = stream.slice(n_train, n_train + n_valid);
    let test = stream.slice(n_train + n_valid, n);
    Ok((train, valid, test))
}
