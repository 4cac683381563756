//! Continuous-output comparison model.
//!
//! Same encoder/mixing/trunk family as the policy generator, but the head
//! emits five continuous values — the three flags in [0,1] and price/volume
//! in [0,39] — and trains end-to-end through the critic like an ordinary
//! convolutional WGAN. Outputs only become orders by rounding at evaluation
//! time.

use numcore::graph::{Graph, Mode, NodeId};
use numcore::{ParamStore, Real};
use orderdomain::{Condition, Order, OrderError, QUOTE_FEATURES};
use rand_chacha::ChaCha8Rng;

use crate::error::GanError;
use crate::layers::Bindings;
use crate::nets::{CondEncoder, NetWidths, Trunk};
use crate::policy::{Seed, SEED_DIM};

/// Emission bounds: flags then price/volume class scale.
pub const CONT_FIELDS: usize = 5;
const CLASS_SCALE: f64 = 39.0;

pub struct ContinuousForward {
    /// `[b, 5]` sigmoid outputs — the critic-feature scale where every
    /// column lies in [0, 1].
    pub unit_values: NodeId,
    pub binds: Bindings,
}

pub struct ContinuousBaselineNet<F: Real> {
    pub widths: NetWidths,
    pub params: ParamStore<F>,
    prefix: String,
    enc: CondEncoder<F>,
    trunk: Trunk<F>,
}

impl<F: Real> ContinuousBaselineNet<F> {
    pub fn new(widths: NetWidths, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Self, GanError> {
        let mut params = ParamStore::new();
        let enc = CondEncoder::register(&mut params, rng, prefix, &widths)?;
        let mix_len = widths.enc3 + QUOTE_FEATURES + SEED_DIM;
        let trunk = Trunk::register(
            &mut params,
            rng,
            prefix,
            mix_len,
            widths.mix_channels,
            &widths.gen_trunk.clone(),
            CONT_FIELDS,
        )?;
        Ok(ContinuousBaselineNet {
            widths,
            params,
            prefix: prefix.to_string(),
            enc,
            trunk,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// Unit-scale outputs `[b, 5]`, each in (0, 1) via sigmoid.
    pub fn forward_graph(
        &mut self,
        g: &mut Graph<F>,
        hist: NodeId,
        quotes: NodeId,
        z: NodeId,
        mode: Mode,
        trainable: bool,
    ) -> Result<ContinuousForward, GanError> {
        let mut binds = Bindings::default();
        let enc_bound = self.enc.bind(g, &self.params, mode, trainable, &mut binds)?;
        let trunk_bound = self.trunk.bind(g, &self.params, mode, trainable, &mut binds)?;
        let enc_out = self.enc.apply(g, &enc_bound, hist, mode)?;
        let mixed_in = g.concat_cols(&[enc_out, quotes, z])?;
        let raw = self.trunk.apply(g, &trunk_bound, mixed_in)?;
        let unit_values = g.sigmoid(raw);
        Ok(ContinuousForward { unit_values, binds })
    }

    /// Detached emissions at the stated output bounds:
    /// `[0,1]³ × [0,39]²` per row.
    pub fn emit(
        &mut self,
        conds: &[&Condition],
        seeds: &[Seed<F>],
        mode: Mode,
    ) -> Result<Vec<[f64; CONT_FIELDS]>, GanError> {
        assert_eq!(conds.len(), seeds.len());
        let mut g = Graph::new();
        let hist = g.constant(crate::nets::hist_tensor(conds));
        let quotes = g.constant(crate::nets::quotes_tensor(conds));
        let z = g.constant(crate::nets::seeds_tensor(seeds));
        let fwd = self.forward_graph(&mut g, hist, quotes, z, mode, false)?;
        let vals = g.value(fwd.unit_values).to_f64_vec();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GanError::NonFinite { what: "baseline output", epoch: 0, step: 0 });
        }
        Ok(vals
            .chunks_exact(CONT_FIELDS)
            .map(|row| {
                [
                    row[0],
                    row[1],
                    row[2],
                    row[3] * CLASS_SCALE,
                    row[4] * CLASS_SCALE,
                ]
            })
            .collect())
    }

    pub fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        for (name, t) in self.params.iter() {
            out.insert(name, t.clone())?;
        }
        self.enc.export_state(out)?;
        self.trunk.export_state(out)
    }

    pub fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        let names: Vec<String> = self.params.names().map(|s| s.to_string()).collect();
        for name in names {
            self.params.set_value(&name, store.get(&name)?.clone())?;
        }
        self.enc.import_state(store)?;
        self.trunk.import_state(store)
    }
}

/// Rounds emitted continuous values to a valid order: flags threshold at
/// 0.5, classes round half-away-from-zero then clip to [0, 39], and a
/// market order's price class is forced to 0 after rounding.
pub fn round_to_discrete(values: &[f64; CONT_FIELDS]) -> Result<Order, OrderError> {
    let flag = |v: f64| u8::from(v >= 0.5);
    let class = |v: f64| v.round().clamp(0.0, CLASS_SCALE) as u8;
    let side = flag(values[0]);
    let action = flag(values[1]);
    let is_mo = flag(values[2]);
    let price = if is_mo == 1 { 0 } else { class(values[3]) };
    let volume = class(values[4]);
    Order::new(side, action, is_mo, price, volume)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rule_examples() {
        let o = round_to_discrete(&[0.6, 0.2, 0.4, 12.7, 3.2]).unwrap();
        assert_eq!(
            (o.side(), o.action(), o.is_mo(), o.price_class(), o.volume_class()),
            (1, 0, 0, 13, 3)
        );

        let o = round_to_discrete(&[0.5, 0.5, 0.5, 39.6, -0.2]).unwrap();
        assert_eq!(
            (o.side(), o.action(), o.is_mo(), o.price_class(), o.volume_class()),
            (1, 1, 1, 0, 0)
        );
    }

    #[test]
    fn any_bounded_output_rounds_to_valid_order() {
        let grid: [f64; 10] = [-0.4, 0.0, 0.49, 0.5, 1.0, 12.3, 38.9, 39.0, 39.49, 39.6];
        for &a in &grid {
            for &b in &grid {
                let values = [a.clamp(-0.4, 1.0), 0.3, b.clamp(-0.4, 1.0), a, b];
                let o = round_to_discrete(&values).unwrap();
                assert!(o.price_class() <= 39 && o.volume_class() <= 39);
                if o.is_mo() == 1 {
                    assert_eq!(o.price_class(), 0);
                }
            }
        }
    }
}
