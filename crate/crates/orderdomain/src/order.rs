//! The discrete order tuple and its flat class-index space.
//!
//! An order is five fields — side, new/cancel, market-order flag, price
//! class, volume class — giving 2·2·2·40·40 = 12,800 joint classes. Price
//! classes count ticks from the *opposite* best quote (a buy at the best ask
//! is 0 ticks); volume classes count minimum volume units. Values of 40 or
//! more fold into the top class. A market order always carries price class 0.

use crate::error::OrderError;

pub const PRICE_CLASSES: usize = 40;
pub const VOLUME_CLASSES: usize = 40;
/// 2 × 2 × 2 × 40 × 40
pub const TOTAL_CLASSES: usize = 12_800;
pub const MAX_CLASS: u8 = 39;

/// Strides of the flat index, side outermost → volume innermost. Frozen:
/// every stored histogram depends on this ordering.
const SIDE_STRIDE: usize = 6400;
const ACTION_STRIDE: usize = 3200;
const MO_STRIDE: usize = 1600;
const PRICE_STRIDE: usize = 40;

/// A validated discrete order.
///
/// Fields are private so every constructed value satisfies the range
/// invariants and the MO ⇒ price-class-0 rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Order {
    side: u8,
    action: u8,
    is_mo: u8,
    price_class: u8,
    volume_class: u8,
}

impl Order {
    pub fn new(
        side: u8,
        action: u8,
        is_mo: u8,
        price_class: u8,
        volume_class: u8,
    ) -> Result<Self, OrderError> {
        let check_flag = |field: &'static str, v: u8| {
            if v > 1 {
                Err(OrderError::FieldRange { field, value: v as i64, max: 1 })
            } else {
                Ok(())
            }
        };
        check_flag("side", side)?;
        check_flag("action", action)?;
        check_flag("is_mo", is_mo)?;
        if price_class > MAX_CLASS {
            return Err(OrderError::FieldRange {
                field: "price_class",
                value: price_class as i64,
                max: MAX_CLASS as i64,
            });
        }
        if volume_class > MAX_CLASS {
            return Err(OrderError::FieldRange {
                field: "volume_class",
                value: volume_class as i64,
                max: MAX_CLASS as i64,
            });
        }
        if is_mo == 1 && price_class != 0 {
            return Err(OrderError::MoPriceNonzero { price_class });
        }
        Ok(Order { side, action, is_mo, price_class, volume_class })
    }

    pub fn side(&self) -> u8 {
        self.side
    }

    pub fn action(&self) -> u8 {
        self.action
    }

    pub fn is_mo(&self) -> u8 {
        self.is_mo
    }

    pub fn price_class(&self) -> u8 {
        self.price_class
    }

    pub fn volume_class(&self) -> u8 {
        self.volume_class
    }

    /// Flat index in `[0, 12800)`.
    pub fn class_index(&self) -> usize {
        self.side as usize * SIDE_STRIDE
            + self.action as usize * ACTION_STRIDE
            + self.is_mo as usize * MO_STRIDE
            + self.price_class as usize * PRICE_STRIDE
            + self.volume_class as usize
    }

    /// Inverse of [`Order::class_index`]. Indices whose decoded fields break
    /// the MO rule are rejected — those cells of the cube are unreachable.
    pub fn from_class_index(index: usize) -> Result<Self, OrderError> {
        if index >= TOTAL_CLASSES {
            return Err(OrderError::BadClassIndex { index, total: TOTAL_CLASSES });
        }
        let side = (index / SIDE_STRIDE) as u8;
        let rem = index % SIDE_STRIDE;
        let action = (rem / ACTION_STRIDE) as u8;
        let rem = rem % ACTION_STRIDE;
        let is_mo = (rem / MO_STRIDE) as u8;
        let rem = rem % MO_STRIDE;
        let price_class = (rem / PRICE_STRIDE) as u8;
        let volume_class = (rem % PRICE_STRIDE) as u8;
        Order::new(side, action, is_mo, price_class, volume_class)
    }

    /// Decodes an index ignoring the MO ⇒ price-0 rule; used where the full
    /// 12,800-cell cube is enumerated (histograms, metrics).
    pub fn fields_of_index(index: usize) -> Result<(u8, u8, u8, u8, u8), OrderError> {
        if index >= TOTAL_CLASSES {
            return Err(OrderError::BadClassIndex { index, total: TOTAL_CLASSES });
        }
        let side = (index / SIDE_STRIDE) as u8;
        let rem = index % SIDE_STRIDE;
        let action = (rem / ACTION_STRIDE) as u8;
        let rem = rem % ACTION_STRIDE;
        let is_mo = (rem / MO_STRIDE) as u8;
        let rem = rem % MO_STRIDE;
        Ok((side, action, is_mo, (rem / PRICE_STRIDE) as u8, (rem % PRICE_STRIDE) as u8))
    }

    /// The five order fields under the same normalization the condition
    /// encoder applies to history rows: flags as 0/1, classes divided by 39.
    pub fn features(&self) -> [f64; 5] {
        [
            self.side as f64,
            self.action as f64,
            self.is_mo as f64,
            self.price_class as f64 / MAX_CLASS as f64,
            self.volume_class as f64 / MAX_CLASS as f64,
        ]
    }
}

/// Folds a non-negative count into a class: `min(value, 39)`.
pub fn clip_to_class(value: i64) -> Result<u8, OrderError> {
    if value < 0 {
        return Err(OrderError::NegativeClassValue { value });
    }
    Ok(value.min(MAX_CLASS as i64) as u8)
}

/// An order as it appears in raw market data: currency prices, share
/// volumes, and the best quotes in effect just before the order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOrder {
    pub side: u8,
    pub action: u8,
    pub is_mo: u8,
    /// Order price in currency units.
    pub price: f64,
    /// Order volume in shares.
    pub volume: f64,
    /// Best bid immediately before this order.
    pub best_bid: f64,
    /// Best ask immediately before this order.
    pub best_ask: f64,
    /// Minimum price increment in currency units.
    pub tick_size: f64,
    /// Minimum volume increment in shares.
    pub min_volume_unit: f64,
}

impl RawOrder {
    pub fn validate(&self) -> Result<(), OrderError> {
        for (field, v) in [("side", self.side), ("action", self.action), ("is_mo", self.is_mo)] {
            if v > 1 {
                return Err(OrderError::FieldRange { field, value: v as i64, max: 1 });
            }
        }
        if self.tick_size <= 0.0 {
            return Err(OrderError::NonPositive { field: "tick_size", value: self.tick_size });
        }
        if self.min_volume_unit <= 0.0 {
            return Err(OrderError::NonPositive {
                field: "min_volume_unit",
                value: self.min_volume_unit,
            });
        }
        if !(self.best_bid > 0.0 && self.best_ask >= self.best_bid) {
            return Err(OrderError::BadQuotes { bid: self.best_bid, ask: self.best_ask });
        }
        grid_count(self.price, self.tick_size)
            .ok_or(OrderError::TickMisaligned { price: self.price, tick_size: self.tick_size })?;
        grid_count(self.volume, self.min_volume_unit).ok_or(OrderError::VolumeMisaligned {
            volume: self.volume,
            unit: self.min_volume_unit,
        })?;
        Ok(())
    }

    /// Mid of the pre-order best quotes.
    pub fn mid(&self) -> f64 {
        0.5 * (self.best_bid + self.best_ask)
    }

    /// Pre-order spread in ticks, rounded to the grid.
    pub fn spread_ticks(&self) -> i64 {
        ((self.best_ask - self.best_bid) / self.tick_size).round() as i64
    }

    /// Tick distance from the opposite best quote: a buy is measured down
    /// from the best ask, a sell up from the best bid.
    pub fn ticks_from_opposite_best(&self) -> i64 {
        let diff = if self.side == 1 {
            self.best_ask - self.price
        } else {
            self.price - self.best_bid
        };
        (diff / self.tick_size).round() as i64
    }
}

/// Number of grid steps if `value` sits on the `unit` grid (within 1e-6 of a
/// step), else `None`.
fn grid_count(value: f64, unit: f64) -> Option<i64> {
    let steps = value / unit;
    let rounded = steps.round();
    if (steps - rounded).abs() <= 1e-6 {
        Some(rounded as i64)
    } else {
        None
    }
}

/// Maps a raw order onto the discrete class grid.
///
/// Price becomes ticks from the opposite best quote, volume becomes minimum
/// volume units, both folded into class 39 at the top. A market order's
/// price class is forced to 0 whatever its raw price.
pub fn discretize(raw: &RawOrder) -> Result<Order, OrderError> {
    raw.validate()?;
    let price_class = if raw.is_mo == 1 {
        0
    } else {
        let ticks = raw.ticks_from_opposite_best();
        if ticks < 0 {
            return Err(OrderError::NegativeTickDistance { ticks });
        }
        clip_to_class(ticks)?
    };
    let units = (raw.volume / raw.min_volume_unit).round() as i64;
    let volume_class = clip_to_class(units)?;
    Order::new(raw.side, raw.action, raw.is_mo, price_class, volume_class)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(side: u8, is_mo: u8, price: f64) -> RawOrder {
        RawOrder {
            side,
            action: 0,
            is_mo,
            price,
            volume: 100.0,
            best_bid: 1000.0,
            best_ask: 1001.0,
            tick_size: 1.0,
            min_volume_unit: 100.0,
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_to_class(0).unwrap(), 0);
        assert_eq!(clip_to_class(40).unwrap(), 39);
        assert_eq!(clip_to_class(1371).unwrap(), 39);
        assert_eq!(clip_to_class(-1), Err(OrderError::NegativeClassValue { value: -1 }));
    }

    #[test]
    fn market_order_price_forced_to_zero() {
        // Buy MO at the ask, at a stale price — class 0 either way.
        for price in [1001.0, 995.0, 1040.0] {
            let o = discretize(&raw(1, 1, price)).unwrap();
            assert_eq!(o.price_class(), 0);
            assert_eq!(o.is_mo(), 1);
        }
    }

    #[test]
    fn sell_one_tick_from_best() {
        let o = discretize(&raw(0, 0, 1001.0)).unwrap();
        assert_eq!(o.price_class(), 1);
        assert_eq!(o.volume_class(), 1);
    }

    #[test]
    fn huge_volume_clips_to_top_class() {
        let mut r = raw(0, 0, 1000.0);
        r.volume = 400_000.0;
        let o = discretize(&r).unwrap();
        assert_eq!(o.volume_class(), 39);
    }

    #[test]
    fn misaligned_price_rejected() {
        let r = raw(1, 0, 1000.5);
        assert!(matches!(discretize(&r), Err(OrderError::TickMisaligned { .. })));
    }

    #[test]
    fn crossing_limit_price_rejected() {
        // A sell below the best bid would be a negative tick distance.
        let r = raw(0, 0, 998.0);
        assert!(matches!(discretize(&r), Err(OrderError::NegativeTickDistance { .. })));
    }

    #[test]
    fn class_index_corners() {
        let lo = Order::new(0, 0, 0, 0, 0).unwrap();
        assert_eq!(lo.class_index(), 0);
        let hi = Order::new(1, 1, 0, 39, 39).unwrap();
        assert_eq!(hi.class_index(), 6400 + 3200 + 39 * 40 + 39);
        // The full-cube maximum (1,1,1,39,39) is unreachable as an Order
        // because MO forces price 0, but the raw field decode covers it.
        let fields = Order::fields_of_index(12_799).unwrap();
        assert_eq!(fields, (1, 1, 1, 39, 39));
    }

    #[test]
    fn mo_with_nonzero_price_class_rejected() {
        assert_eq!(
            Order::new(0, 0, 1, 3, 0),
            Err(OrderError::MoPriceNonzero { price_class: 3 })
        );
    }

    #[test]
    fn discretize_idempotent_on_own_output() {
        // Re-encode a discretized order as raw values; the classes survive.
        let first = discretize(&raw(1, 0, 996.0)).unwrap();
        let again = RawOrder {
            side: first.side(),
            action: first.action(),
            is_mo: first.is_mo(),
            price: 1001.0 - first.price_class() as f64,
            volume: first.volume_class() as f64 * 100.0,
            best_bid: 1000.0,
            best_ask: 1001.0,
            tick_size: 1.0,
            min_volume_unit: 100.0,
        };
        assert_eq!(discretize(&again).unwrap(), first);
    }
}
