//! Sliding (condition, next order) windows.

use orderdomain::{discretize, encode_condition, Condition, Order, HISTORY_LEN};

use crate::error::DataError;
use crate::stream::OrderStream;

/// A training/evaluation pair: the encoded history plus the discretized
/// order that actually followed it.
pub type WindowPair = (Condition, Order);

/// Stride-1 windows: pair `k` pairs history rows `[k, k+20)` with target row
/// `k + 20`; the target's own pre-order quotes serve as the current quotes.
pub fn make_windows(stream: &OrderStream) -> Result<Vec<WindowPair>, DataError> {
    let n = stream.len();
    if n < HISTORY_LEN + 1 {
        return Err(DataError::TooShort {
            needed: HISTORY_LEN + 1,
            got: n,
        });
    }
    let rows = stream.rows();
    let mut out = Vec::with_capacity(n - HISTORY_LEN);
    for k in 0..n - HISTORY_LEN {
        let target = &rows[k + HISTORY_LEN];
        let cond = encode_condition(&rows[k..k + HISTORY_LEN], target.best_bid, target.best_ask)?;
        let order = discretize(target)?;
        out.push((cond, order));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamMeta;
    use orderdomain::RawOrder;

    fn stream_of(n: usize) -> OrderStream {
        let rows: Vec<RawOrder> = (0..n)
            .map(|i| RawOrder {
                side: (i % 2) as u8,
                action: 0,
                is_mo: 0,
                price: if i % 2 == 1 { 1001.0 - (i % 3) as f64 } else { 1000.0 + (i % 3) as f64 },
                volume: 100.0 * ((i % 5) as f64),
                best_bid: 1000.0,
                best_ask: 1001.0,
                tick_size: 1.0,
                min_volume_unit: 100.0,
            })
            .collect();
        OrderStream::new(
            StreamMeta {
                tick_size: 1.0,
                min_volume_unit: 100.0,
                instrument: "T".to_string(),
            },
            (0..n as u64).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn length_21_gives_one_pair() {
        assert_eq!(make_windows(&stream_of(21)).unwrap().len(), 1);
    }

    #[test]
    fn length_40_gives_twenty_pairs() {
        assert_eq!(make_windows(&stream_of(40)).unwrap().len(), 20);
    }

    #[test]
    fn target_is_stream_entry_k_plus_20() {
        let stream = stream_of(30);
        let pairs = make_windows(&stream).unwrap();
        for (k, (_, order)) in pairs.iter().enumerate() {
            let expect = discretize(&stream.rows()[k + HISTORY_LEN]).unwrap();
            assert_eq!(*order, expect);
        }
    }

    #[test]
    fn twenty_rows_too_short() {
        assert!(matches!(
            make_windows(&stream_of(20)),
            Err(DataError::TooShort { needed: 21, got: 20 })
        ));
    }
}
