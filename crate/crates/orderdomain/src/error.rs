use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OrderError {
    #[error("{field} = {value} outside [0, {max}]")]
    FieldRange {
        field: &'static str,
        value: i64,
        max: i64,
    },

    #[error("market order must have price class 0, got {price_class}")]
    MoPriceNonzero { price_class: u8 },

    #[error("class value {value} is negative")]
    NegativeClassValue { value: i64 },

    #[error("quotes invalid: best_bid {bid} best_ask {ask} (need ask >= bid > 0)")]
    BadQuotes { bid: f64, ask: f64 },

    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("price {price} not aligned to tick size {tick_size}")]
    TickMisaligned { price: f64, tick_size: f64 },

    #[error("volume {volume} not aligned to minimum volume unit {unit}")]
    VolumeMisaligned { volume: f64, unit: f64 },

    #[error("price is {ticks} ticks beyond the opposite best quote (must not cross)")]
    NegativeTickDistance { ticks: i64 },

    #[error("history must hold exactly {expected} orders, got {got}")]
    HistoryLength { expected: usize, got: usize },

    #[error("class index {index} outside [0, {total})")]
    BadClassIndex { index: usize, total: usize },
}
