//! Synthetic zero-intelligence order flow with a closed-form class
//! distribution.
//!
//! Orders are drawn from categorical tables conditioned on a small market
//! state — the previous order's side and the current spread bucket. Price and
//! volume classes follow truncated geometric distributions. Quotes move by a
//! stylized deterministic rule (a market order widens the spread one tick, an
//! aggressive new order tightens it, a touch cancel widens it), so the
//! (side, spread) process is a finite Markov chain whose limiting
//! distribution — and therefore the exact long-run class distribution — is
//! computable by enumeration. That exact distribution ships with the stream
//! and anchors the evaluation metrics.

use orderdomain::{RawOrder, MAX_CLASS, PRICE_CLASSES, TOTAL_CLASSES, VOLUME_CLASSES};
use rand::Rng;

use crate::error::DataError;
use crate::stream::{OrderStream, StreamMeta};

/// Spread buckets conditioning the tables: 1 tick / 2–3 ticks / 4+ ticks.
pub const SPREAD_BUCKETS: usize = 3;

fn spread_bucket(spread: i64) -> usize {
    match spread {
        ..=1 => 0,
        2..=3 => 1,
        _ => 2,
    }
}

/// Conditional order distribution for one (last side, spread bucket) state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTable {
    /// P(side = buy)
    pub p_buy: f64,
    /// P(action = cancel)
    pub p_cancel: f64,
    /// P(market order)
    pub p_mo: f64,
    /// Geometric decay of the price-class distribution, in [0, 1).
    pub q_price: f64,
    /// Geometric decay of the volume-class distribution, in [0, 1).
    pub q_vol: f64,
}

impl StateTable {
    fn validate(&self, state: &str) -> Result<(), DataError> {
        let bad = |detail: String| DataError::Distribution {
            state: state.to_string(),
            detail,
        };
        for (name, p) in [("p_buy", self.p_buy), ("p_cancel", self.p_cancel), ("p_mo", self.p_mo)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("{name} = {p} outside [0,1]")));
            }
        }
        for (name, q) in [("q_price", self.q_price), ("q_vol", self.q_vol)] {
            if !(0.0..1.0).contains(&q) {
                return Err(bad(format!("{name} = {q} outside [0,1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_orders: usize,
    pub seed: u64,
    pub tick_size: f64,
    pub min_volume_unit: f64,
    pub instrument: String,
    /// Initial best bid in ticks; keep it large so the toy mid-price walk
    /// never approaches zero.
    pub initial_bid_ticks: i64,
    pub initial_spread: i64,
    pub max_spread: i64,
    /// One table per (last side 0/1, spread bucket 0..3), row-major on side.
    pub tables: [StateTable; 2 * SPREAD_BUCKETS],
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Mildly state-dependent flow: wide spreads attract aggressive
        // replenishment; the side alternation gives the history signal.
        let t = |p_buy, p_cancel, p_mo, q_price, q_vol| StateTable {
            p_buy,
            p_cancel,
            p_mo,
            q_price,
            q_vol,
        };
        SynthConfig {
            n_orders: 50_000,
            seed: 1,
            tick_size: 1.0,
            min_volume_unit: 100.0,
            instrument: "SYNTH".to_string(),
            initial_bid_ticks: 100_000,
            initial_spread: 2,
            max_spread: 5,
            tables: [
                // last side = sell
                t(0.62, 0.22, 0.10, 0.42, 0.38),
                t(0.55, 0.28, 0.07, 0.50, 0.42),
                t(0.50, 0.33, 0.04, 0.58, 0.46),
                // last side = buy
                t(0.38, 0.22, 0.10, 0.42, 0.38),
                t(0.45, 0.28, 0.07, 0.50, 0.42),
                t(0.50, 0.33, 0.04, 0.58, 0.46),
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let cfg_err = |key: &str, detail: String| DataError::Config {
            key: key.to_string(),
            detail,
        };
        if self.n_orders == 0 {
            return Err(cfg_err("n_orders", "must be positive".to_string()));
        }
        if self.tick_size <= 0.0 {
            return Err(cfg_err("tick_size", format!("{} not positive", self.tick_size)));
        }
        if self.min_volume_unit <= 0.0 {
            return Err(cfg_err(
                "min_volume_unit",
                format!("{} not positive", self.min_volume_unit),
            ));
        }
        if !(1..=MAX_CLASS as i64).contains(&self.max_spread) {
            return Err(cfg_err("max_spread", format!("{} outside [1, 39]", self.max_spread)));
        }
        if !(1..=self.max_spread).contains(&self.initial_spread) {
            return Err(cfg_err(
                "initial_spread",
                format!("{} outside [1, max_spread]", self.initial_spread),
            ));
        }
        if self.initial_bid_ticks < 1_000 {
            return Err(cfg_err(
                "initial_bid_ticks",
                format!("{} too small; needs headroom >= 1000 ticks", self.initial_bid_ticks),
            ));
        }
        for side in 0..2 {
            for bucket in 0..SPREAD_BUCKETS {
                self.tables[side * SPREAD_BUCKETS + bucket]
                    .validate(&format!("side={side} bucket={bucket}"))?;
            }
        }
        Ok(())
    }



    fn n_states(&self) -> usize {
        2 * self.max_spread as usize
    }

    fn state_id(&self, last_side: u8, spread: i64) -> usize {
        last_side as usize * self.max_spread as usize + (spread - 1) as usize
    }
}

/// Truncated geometric over the 40 classes: P(k) ∝ q^k, renormalized.
/// q = 0 degenerates to all mass on class 0.
pub fn geometric_class_probs(q: f64, classes: usize) -> Vec<f64> {
    if q == 0.0 {
        let mut p = vec![0.0; classes];
        p[0] = 1.0;
        return p;
    }
    let mut probs: Vec<f64> = (0..classes).map(|k| q.powi(k as i32)).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// One drawn order reduced to what the quote rule needs.
#[derive(Clone, Copy)]
struct Draw {
    side: u8,
    action: u8,
    is_mo: u8,
    price_class: u8,
}

/// Deterministic stylized quote update; returns (bid delta in ticks, new
/// spread). An MO eats the touched level (spread +1), a new order at the
/// opposite best improves the quote (spread −1), a touch cancel re-widens
/// (spread +1). Everything else leaves quotes alone.
fn quote_step(spread: i64, max_spread: i64, d: Draw) -> (i64, i64) {
    if d.is_mo == 1 {
        if spread < max_spread {
            // buy MO lifts the ask; sell MO hits the bid
            let bid_delta = if d.side == 1 { 0 } else { -1 };
            return (bid_delta, spread + 1);
        }
        return (0, spread);
    }
    if d.price_class == 0 {
        if d.action == 0 {
            if spread > 1 {
                let bid_delta = if d.side == 1 { 1 } else { 0 };
                return (bid_delta, spread - 1);
            }
        } else if spread < max_spread {
            let bid_delta = if d.side == 1 { -1 } else { 0 };
            return (bid_delta, spread + 1);
        }
    }
    (0, spread)
}

/// Generates the stream and the exact limiting class distribution implied by
/// the config.
pub fn synth_market(config: &SynthConfig) -> Result<(OrderStream, Vec<f64>), DataError> {
    config.validate()?;
    let mut rng = numcore::rng::derive_rng(config.seed, "synth");

    let price_probs: Vec<Vec<f64>> = config
        .tables
        .iter()
        .map(|t| geometric_class_probs(t.q_price, PRICE_CLASSES))
        .collect();
    let vol_probs: Vec<Vec<f64>> = config
        .tables
        .iter()
        .map(|t| geometric_class_probs(t.q_vol, VOLUME_CLASSES))
        .collect();

    let tick = config.tick_size;
    let floor_ticks = 1_000i64;
    let mut bid_ticks = config.initial_bid_ticks;
    let mut spread = config.initial_spread;
    let mut last_side: u8 = 1;

    let mut seqs = Vec::with_capacity(config.n_orders);
    let mut rows = Vec::with_capacity(config.n_orders);
    for i in 0..config.n_orders {
        let table_idx = last_side as usize * SPREAD_BUCKETS + spread_bucket(spread);
        let table = &config.tables[table_idx];
        let side = (rng.gen::<f64>() < table.p_buy) as u8;
        let action = (rng.gen::<f64>() < table.p_cancel) as u8;
        let is_mo = (rng.gen::<f64>() < table.p_mo) as u8;
        let price_class = if is_mo == 1 {
            0u8
        } else {
            sample_categorical(&price_probs[table_idx], &mut rng) as u8
        };
        let volume_class = sample_categorical(&vol_probs[table_idx], &mut rng) as u8;

        let bid = bid_ticks as f64 * tick;
        let ask = (bid_ticks + spread) as f64 * tick;
        let price = if side == 1 {
            ask - price_class as f64 * tick
        } else {
            bid + price_class as f64 * tick
        };
        rows.push(RawOrder {
            side,
            action,
            is_mo,
            price,
            volume: volume_class as f64 * config.min_volume_unit,
            best_bid: bid,
            best_ask: ask,
            tick_size: tick,
            min_volume_unit: config.min_volume_unit,
        });
        seqs.push(i as u64);

        let draw = Draw { side, action, is_mo, price_class };
        let (bid_delta, new_spread) = quote_step(spread, config.max_spread, draw);
        bid_ticks = (bid_ticks + bid_delta).max(floor_ticks);
        spread = new_spread;
        last_side = side;
    }

    let meta = StreamMeta {
        tick_size: tick,
        min_volume_unit: config.min_volume_unit,
        instrument: config.instrument.clone(),
    };
    let stream = OrderStream::new(meta, seqs, rows)?;
    let truth = exact_class_distribution(config);
    Ok((stream, truth))
}

/// The limiting distribution over the 12,800 classes, by enumeration.
///
/// The (last side, spread) chain has at most 2·max_spread states; its
/// limiting distribution from the fixed initial state comes from repeated
/// squaring of the transition matrix, and the class distribution is the
/// π-weighted mixture of the per-state factorized order distributions.
pub fn exact_class_distribution(config: &SynthConfig) -> Vec<f64> {
    let n_states = config.n_states();
    let max_spread = config.max_spread;

    let price_probs: Vec<Vec<f64>> = config
        .tables
        .iter()
        .map(|t| geometric_class_probs(t.q_price, PRICE_CLASSES))
        .collect();
    let vol_probs: Vec<Vec<f64>> = config
        .tables
        .iter()
        .map(|t| geometric_class_probs(t.q_vol, VOLUME_CLASSES))
        .collect();

    // Transition matrix over (last_side, spread). Only side, action, MO flag
    // and whether the price class is 0 matter for the spread move.
    let mut trans = vec![0.0f64; n_states * n_states];
    for last_side in 0..2u8 {
        for spread in 1..=max_spread {
            let from = config.state_id(last_side, spread);
            let table_idx = last_side as usize * SPREAD_BUCKETS + spread_bucket(spread);
            let table = &config.tables[table_idx];
            let p_price0 = price_probs[table_idx][0];
            for side in 0..2u8 {
                let p_side = if side == 1 { table.p_buy } else { 1.0 - table.p_buy };
                for action in 0..2u8 {
                    let p_action = if action == 1 { table.p_cancel } else { 1.0 - table.p_cancel };
                    for is_mo in 0..2u8 {
                        let p_mo = if is_mo == 1 { table.p_mo } else { 1.0 - table.p_mo };
                        // price==0 vs price>0 split (degenerate under MO)
                        let splits: [(bool, f64); 2] = if is_mo == 1 {
                            [(true, 1.0), (false, 0.0)]
                        } else {
                            [(true, p_price0), (false, 1.0 - p_price0)]
                        };
                        for (price_is_zero, p_split) in splits {
                            if p_split == 0.0 {
                                continue;
                            }
                            let draw = Draw {
                                side,
                                action,
                                is_mo,
                                price_class: if price_is_zero { 0 } else { 1 },
                            };
                            let (_, new_spread) = quote_step(spread, max_spread, draw);
                            let to = config.state_id(side, new_spread);
                            trans[from * n_states + to] += p_side * p_action * p_mo * p_split;
                        }
                    }
                }
            }
        }
    }

    // Long-run state occupancy from the generator's actual initial state:
    // iterate π ← πP past mixing, then Cesàro-average so periodic chains
    // land on the same limit the empirical frequencies do.
    let mut pi = vec![0.0f64; n_states];
    pi[config.state_id(1, config.initial_spread)] = 1.0;
    for _ in 0..10_000 {
        pi = mat_vec_left(&pi, &trans, n_states);
        let total: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= total;
        }
    }
    let mut avg = vec![0.0f64; n_states];
    for _ in 0..1_000 {
        pi = mat_vec_left(&pi, &trans, n_states);
        for (a, &p) in avg.iter_mut().zip(&pi) {
            *a += p;
        }
    }
    let total: f64 = avg.iter().sum();
    let pi: Vec<f64> = avg.iter().map(|&a| a / total).collect();

    let mut dist = vec![0.0f64; TOTAL_CLASSES];
    for last_side in 0..2u8 {
        for spread in 1..=max_spread {
            let w = pi[config.state_id(last_side, spread)];
            if w == 0.0 {
                continue;
            }
            let table_idx = last_side as usize * SPREAD_BUCKETS + spread_bucket(spread);
            let table = &config.tables[table_idx];
            for side in 0..2u8 {
                let p_side = if side == 1 { table.p_buy } else { 1.0 - table.p_buy };
                for action in 0..2u8 {
                    let p_action = if action == 1 { table.p_cancel } else { 1.0 - table.p_cancel };
                    for is_mo in 0..2u8 {
                        let p_mo = if is_mo == 1 { table.p_mo } else { 1.0 - table.p_mo };
                        let head = w * p_side * p_action * p_mo;
                        if head == 0.0 {
                            continue;
                        }
                        let base = side as usize * 6400 + action as usize * 3200 + is_mo as usize * 1600;
                        if is_mo == 1 {
                            for (v, &pv) in vol_probs[table_idx].iter().enumerate() {
                                dist[base + v] += head * pv;
                            }
                        } else {
                            for (k, &pk) in price_probs[table_idx].iter().enumerate() {
                                let row = base + k * 40;
                                let hk = head * pk;
                                for (v, &pv) in vol_probs[table_idx].iter().enumerate() {
                                    dist[row + v] += hk * pv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dist
}

fn mat_vec_left(v: &[f64], m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for j in 0..n {
            out[j] += vi * m[i * n + j];
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use orderdomain::discretize;

    #[test]
    fn ground_truth_sums_to_one() {
        let config = SynthConfig::default();
        let dist = exact_class_distribution(&config);
        let total: f64 = dist.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
        assert!(dist.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn same_seed_same_stream() {
        let mut config = SynthConfig::default();
        config.n_orders = 500;
        let (a, _) = synth_market(&config).unwrap();
        let (b, _) = synth_market(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_config_emits_one_order_class() {
        let mut config = SynthConfig::default();
        config.n_orders = 200;
        config.initial_spread = 1;
        config.tables = [StateTable {
            p_buy: 1.0,
            p_cancel: 0.0,
            p_mo: 0.0,
            q_price: 0.0,
            q_vol: 0.0,
        }; 6];
        let (stream, truth) = synth_market(&config).unwrap();
        let first = discretize(&stream.rows()[0]).unwrap();
        for row in stream.rows() {
            assert_eq!(discretize(row).unwrap(), first);
            // quotes static: improving needs spread > 1
            assert_eq!(row.best_bid, stream.rows()[0].best_bid);
            assert_eq!(row.best_ask, stream.rows()[0].best_ask);
        }
        let idx = first.class_index();
        assert!((truth[idx] - 1.0).abs() < 1e-12);
        assert_eq!(truth.iter().filter(|&&p| p > 0.0).count(), 1);
    }

    #[test]
    fn empirical_frequencies_match_ground_truth() {
        let mut config = SynthConfig::default();
        config.n_orders = 1_000_000;
        config.seed = 42;
        let (stream, truth) = synth_market(&config).unwrap();
        let mut counts = vec![0u64; TOTAL_CLASSES];
        for row in stream.rows() {
            counts[discretize(row).unwrap().class_index()] += 1;
        }
        let n = stream.len() as f64;
        let tv: f64 = counts
            .iter()
            .zip(&truth)
            .map(|(&c, &p)| (c as f64 / n - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn invalid_table_rejected() {
        let mut config = SynthConfig::default();
        config.tables[2].p_mo = 1.2;
        assert!(matches!(synth_market(&config), Err(DataError::Distribution { .. })));
    }
}
