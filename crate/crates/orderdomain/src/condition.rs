//! Conditional input: the last 20 orders plus current best quotes, encoded
//! as bounded features.
//!
//! Each history row becomes 7 features: the three order flags, the two
//! classes divided by 39, the pre-order spread in ticks (clipped to 39,
//! divided by 39), and the mid-price log-return since the window's first
//! entry clamped to ±1. The current-quote vector carries the same two quote
//! features measured at generation time. Everything lands in [−1, 1], so one
//! model serves any absolute price level.

use crate::error::OrderError;
use crate::order::{clip_to_class, discretize, RawOrder, MAX_CLASS};

pub const HISTORY_LEN: usize = 20;
pub const HISTORY_FEATURES: usize = 7;
pub const QUOTE_FEATURES: usize = 2;

/// Encoded network condition: `[20, 7]` history matrix plus `[2]` quote vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    history: Vec<[f64; HISTORY_FEATURES]>,
    current: [f64; QUOTE_FEATURES],
}

impl Condition {
    pub fn history(&self) -> &[[f64; HISTORY_FEATURES]] {
        &self.history
    }

    pub fn current_quotes(&self) -> &[f64; QUOTE_FEATURES] {
        &self.current
    }

    /// History features flattened channel-major: `[7, 20]` row-major, i.e.
    /// feature `f` of step `t` at `f * 20 + t`. This is the layout the
    /// convolutional encoders consume.
    pub fn history_channel_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; HISTORY_FEATURES * HISTORY_LEN];
        for (t, row) in self.history.iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                out[f * HISTORY_LEN + t] = v;
            }
        }
        out
    }
}

fn quote_features(bid: f64, ask: f64, tick_size: f64, mid0: f64) -> Result<[f64; 2], OrderError> {
    if !(bid > 0.0 && ask >= bid) {
        return Err(OrderError::BadQuotes { bid, ask });
    }
    let spread_ticks = ((ask - bid) / tick_size).round() as i64;
    let spread_norm = clip_to_class(spread_ticks)? as f64 / MAX_CLASS as f64;
    let mid = 0.5 * (bid + ask);
    let ret = (mid / mid0).ln().clamp(-1.0, 1.0);
    Ok([spread_norm, ret])
}

/// Encodes exactly [`HISTORY_LEN`] chronologically ordered raw orders and the
/// current best quotes into a [`Condition`].
pub fn encode_condition(
    history: &[RawOrder],
    current_bid: f64,
    current_ask: f64,
) -> Result<Condition, OrderError> {
    if history.len() != HISTORY_LEN {
        return Err(OrderError::HistoryLength {
            expected: HISTORY_LEN,
            got: history.len(),
        });
    }
    let mid0 = history[0].mid();
    let tick = history[0].tick_size;
    let mut rows = Vec::with_capacity(HISTORY_LEN);
    for raw in history {
        let order = discretize(raw)?;
        let [side, action, is_mo, price, volume] = order.features();
        let [spread, ret] = quote_features(raw.best_bid, raw.best_ask, raw.tick_size, mid0)?;
        rows.push([side, action, is_mo, price, volume, spread, ret]);
    }
    let current = quote_features(current_bid, current_ask, tick, mid0)?;
    Ok(Condition { history: rows, current })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_raw() -> RawOrder {
        RawOrder {
            side: 1,
            action: 0,
            is_mo: 0,
            price: 1000.0,
            volume: 200.0,
            best_bid: 1000.0,
            best_ask: 1001.0,
            tick_size: 1.0,
            min_volume_unit: 100.0,
        }
    }

    #[test]
    fn constant_history_gives_constant_rows_and_zero_return() {
        let history = vec![flat_raw(); HISTORY_LEN];
        let cond = encode_condition(&history, 1000.0, 1001.0).unwrap();
        let first = cond.history()[0];
        for row in cond.history() {
            assert_eq!(*row, first);
        }
        assert_eq!(first[6], 0.0, "mid return of an unmoved window");
        assert_eq!(cond.current_quotes()[1], 0.0);
    }

    #[test]
    fn shapes_are_fixed() {
        let history = vec![flat_raw(); HISTORY_LEN];
        let cond = encode_condition(&history, 1000.0, 1001.0).unwrap();
        assert_eq!(cond.history().len(), HISTORY_LEN);
        assert_eq!(cond.history()[0].len(), HISTORY_FEATURES);
        assert_eq!(cond.current_quotes().len(), QUOTE_FEATURES);
        assert_eq!(cond.history_channel_major().len(), HISTORY_FEATURES * HISTORY_LEN);
    }

    #[test]
    fn spread_of_three_ticks_normalizes() {
        let mut entry = flat_raw();
        entry.best_ask = 1003.0;
        entry.price = 1003.0; // one... at the opposite best: 0 ticks
        let history = vec![entry; HISTORY_LEN];
        let cond = encode_condition(&history, 1000.0, 1003.0).unwrap();
        let expect = 3.0 / 39.0;
        assert!((cond.history()[0][5] - expect).abs() < 1e-12);
        assert!((cond.current_quotes()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn wrong_history_length_rejected() {
        let history = vec![flat_raw(); 19];
        assert_eq!(
            encode_condition(&history, 1000.0, 1001.0),
            Err(OrderError::HistoryLength { expected: 20, got: 19 })
        );
    }

    #[test]
    fn features_bounded() {
        let mut history = vec![flat_raw(); HISTORY_LEN];
        // extreme but valid rows
        history[3].best_ask = 1100.0;
        history[3].price = 1100.0;
        history[7].volume = 900_000.0;
        let cond = encode_condition(&history, 500.0, 2000.0).unwrap();
        for row in cond.history() {
            for &v in row {
                assert!((-1.0..=1.0).contains(&v), "{v}");
            }
        }
        for &v in cond.current_quotes() {
            assert!((-1.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn channel_major_layout() {
        let mut history = vec![flat_raw(); HISTORY_LEN];
        history[5].side = 0;
        history[5].price = 1001.0; // sell one tick above bid... 1 tick
        let cond = encode_condition(&history, 1000.0, 1001.0).unwrap();
        let flat = cond.history_channel_major();
        // channel 0 (side) at t=5 flips to 0
        assert_eq!(flat[5], 0.0);
        assert_eq!(flat[0], 1.0);
    }
}
