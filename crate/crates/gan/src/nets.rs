//! Generator and critic networks.
//!
//! Both share one architecture family: a convolutional condition encoder
//! over the 20-step history (batch-normed conv pairs with average pooling
//! between, buffering the time axis down to a vector), then a mixing stage
//! of dilated circular convolutions over the concatenated inputs so the
//! pieces blend position-independently, then a layer-normed linear trunk.
//! The generator concatenates the 128-dim seed and ends in 83 policy logits
//! (three one-logit binaries plus two 40-way heads); the critic concatenates
//! the candidate order's five features and ends in one scalar. Encoders have
//! identical shapes but disjoint parameters. Every conv and linear weight is
//! spectrally normalized, in the critic for the Lipschitz bound and in the
//! generator for stability.
//!
//! At the default widths the generator stacks 14 convolutions and 5 linear
//! layers; the critic differs only in its final layers.

use numcore::graph::{Graph, Mode, NodeId};
use numcore::{ParamStore, Real, Tensor};
use orderdomain::{Condition, Order, HISTORY_FEATURES, HISTORY_LEN, QUOTE_FEATURES};
use rand_chacha::ChaCha8Rng;

use crate::error::GanError;
use crate::layers::{
    circular_conv_spec, same_conv_spec, BatchNormDesc, Bindings, BoundBn, BoundConv, BoundLinear,
    BoundLn, Conv1dDesc, LayerNormDesc, LinearDesc, ACT_SLOPE,
};
use crate::policy::{Policy, Seed, SEED_DIM};

pub const ORDER_FEATURES: usize = 5;
pub const POLICY_LOGITS: usize = 1 + 1 + 1 + 40 + 40;

/// Channel/width configuration. The layer counts are fixed by the
/// architecture (6 encoder convs + 8 mixing convs; trunk + head linears);
/// widths scale capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWidths {
    pub enc1: usize,
    pub enc2: usize,
    pub enc3: usize,
    pub mix_channels: usize,
    pub gen_trunk: Vec<usize>,
    pub critic_trunk: Vec<usize>,
}

pub const MIX_LAYERS: usize = 8;
const MIX_DILATIONS: [usize; 4] = [1, 2, 4, 8];

impl NetWidths {
    /// Full-size widths; lands near 142K generator / 113K critic parameters
    /// with a ~44K-parameter condition encoder.
    pub fn paper_default() -> Self {
        NetWidths {
            enc1: 24,
            enc2: 48,
            enc3: 80,
            mix_channels: 6,
            gen_trunk: vec![64, 64, 64, 64],
            critic_trunk: vec![110, 64],
        }
    }

    /// Desk-scale training widths.
    pub fn reduced() -> Self {
        NetWidths {
            enc1: 8,
            enc2: 12,
            enc3: 16,
            mix_channels: 4,
            gen_trunk: vec![32, 32, 32, 32],
            critic_trunk: vec![48, 32],
        }
    }

    /// Smallest widths that keep the full layer structure; used by the
    /// finite-difference checks over whole graphs.
    pub fn tiny() -> Self {
        NetWidths {
            enc1: 3,
            enc2: 4,
            enc3: 5,
            mix_channels: 2,
            gen_trunk: vec![8, 8, 8, 8],
            critic_trunk: vec![10, 8],
        }
    }

    pub fn parse(name: &str) -> Result<Self, GanError> {
        match name {
            "default" => Ok(Self::paper_default()),
            "reduced" => Ok(Self::reduced()),
            "tiny" => Ok(Self::tiny()),
            other => Err(GanError::Config(format!(
                "unknown widths preset {other:?} (default|reduced|tiny)"
            ))),
        }
    }

    pub fn conv_layer_count(&self) -> usize {
        6 + MIX_LAYERS
    }

    pub fn gen_linear_count(&self) -> usize {
        self.gen_trunk.len() + 1
    }

    pub fn critic_linear_count(&self) -> usize {
        self.critic_trunk.len() + 1
    }
}

/// Convolutional stack over the `[batch, 7, 20]` history, pooled down the
/// time axis to a flat vector.
pub(crate) struct CondEncoder<F: Real> {
    convs: Vec<Conv1dDesc<F>>,
    norms: Vec<BatchNormDesc<F>>,
    out_dim: usize,
}

pub(crate) struct BoundEncoder {
    convs: Vec<BoundConv>,
    norms: Vec<BoundBn>,
}

/// (pool window, pool stride) after each conv pair for the 20-step history.
const ENCODER_POOLS: [(usize, usize); 3] = [(2, 2), (2, 2), (5, 5)];

impl<F: Real> CondEncoder<F> {
    pub(crate) fn register(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        widths: &NetWidths,
    ) -> Result<Self, GanError> {
        let dims = [
            (HISTORY_FEATURES, widths.enc1),
            (widths.enc1, widths.enc1),
            (widths.enc1, widths.enc2),
            (widths.enc2, widths.enc2),
            (widths.enc2, widths.enc3),
            (widths.enc3, widths.enc3),
        ];
        let mut convs = Vec::with_capacity(dims.len());
        let mut norms = Vec::with_capacity(dims.len());
        for (i, &(cin, cout)) in dims.iter().enumerate() {
            convs.push(Conv1dDesc::register(
                store,
                rng,
                &format!("{prefix}.enc.conv{i}"),
                cin,
                cout,
                3,
                same_conv_spec(),
            )?);
            norms.push(BatchNormDesc::register(store, &format!("{prefix}.enc.bn{i}"), cout)?);
        }
        Ok(CondEncoder { convs, norms, out_dim: widths.enc3 })
    }

    pub(crate) fn bind(
        &mut self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        mode: Mode,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundEncoder, GanError> {
        let mut convs = Vec::with_capacity(self.convs.len());
        for c in self.convs.iter_mut() {
            convs.push(c.bind(g, store, mode, trainable, binds)?);
        }
        let mut norms = Vec::with_capacity(self.norms.len());
        for n in self.norms.iter_mut() {
            norms.push(n.bind(g, store, trainable, binds)?);
        }
        Ok(BoundEncoder { convs, norms })
    }

    /// `[b, 7, 20]` → `[b, enc3]`
    pub(crate) fn apply(
        &mut self,
        g: &mut Graph<F>,
        bound: &BoundEncoder,
        hist: NodeId,
        mode: Mode,
    ) -> Result<NodeId, GanError> {
        let batch = g.shape(hist)[0];
        let mut x = hist;
        for pair in 0..3 {
            for j in 0..2 {
                let i = pair * 2 + j;
                x = bound.convs[i].apply(g, x)?;
                x = self.norms[i].apply(g, &bound.norms[i], x, mode)?;
                x = g.leaky_relu(x, F::from_f64(ACT_SLOPE));
            }
            let (w, s) = ENCODER_POOLS[pair];
            x = g.avg_pool1d(x, w, s)?;
        }
        Ok(g.reshape(x, vec![batch, self.out_dim])?)
    }

    pub(crate) fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        for c in &self.convs {
            c.export_state(out)?;
        }
        for n in &self.norms {
            n.export_state(out)?;
        }
        Ok(())
    }

    pub(crate) fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        for c in self.convs.iter_mut() {
            c.import_state(store)?;
        }
        for n in self.norms.iter_mut() {
            n.import_state(store)?;
        }
        Ok(())
    }
}

/// Mixing + trunk shared by generator and critic (they differ in input
/// width and head).
pub(crate) struct Trunk<F: Real> {
    mix: Vec<Conv1dDesc<F>>,
    mix_norms: Vec<LayerNormDesc>,
    linears: Vec<LinearDesc<F>>,
    linear_norms: Vec<LayerNormDesc>,
    head: LinearDesc<F>,
    mix_channels: usize,
    mix_len: usize,
}

pub(crate) struct BoundTrunk {
    mix: Vec<BoundConv>,
    mix_norms: Vec<BoundLn>,
    linears: Vec<BoundLinear>,
    linear_norms: Vec<BoundLn>,
    head: BoundLinear,
}

impl<F: Real> Trunk<F> {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn register(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        mix_len: usize,
        mix_channels: usize,
        trunk_widths: &[usize],
        head_dim: usize,
    ) -> Result<Self, GanError> {
        let mut mix = Vec::with_capacity(MIX_LAYERS);
        let mut mix_norms = Vec::with_capacity(MIX_LAYERS);
        for i in 0..MIX_LAYERS {
            let cin = if i == 0 { 1 } else { mix_channels };
            mix.push(Conv1dDesc::register(
                store,
                rng,
                &format!("{prefix}.mix.conv{i}"),
                cin,
                mix_channels,
                3,
                circular_conv_spec(MIX_DILATIONS[i % MIX_DILATIONS.len()]),
            )?);
            mix_norms.push(LayerNormDesc::register(
                store,
                &format!("{prefix}.mix.ln{i}"),
                mix_channels,
            )?);
        }
        let mut linears = Vec::with_capacity(trunk_widths.len());
        let mut linear_norms = Vec::with_capacity(trunk_widths.len());
        let mut in_dim = mix_channels * mix_len;
        for (i, &w) in trunk_widths.iter().enumerate() {
            linears.push(LinearDesc::register(
                store,
                rng,
                &format!("{prefix}.trunk.fc{i}"),
                in_dim,
                w,
            )?);
            linear_norms.push(LayerNormDesc::register(store, &format!("{prefix}.trunk.ln{i}"), w)?);
            in_dim = w;
        }
        let head = LinearDesc::register(store, rng, &format!("{prefix}.head"), in_dim, head_dim)?;
        Ok(Trunk {
            mix,
            mix_norms,
            linears,
            linear_norms,
            head,
            mix_channels,
            mix_len,
        })
    }

    pub(crate) fn bind(
        &mut self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        mode: Mode,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundTrunk, GanError> {
        let mut mix = Vec::with_capacity(self.mix.len());
        for c in self.mix.iter_mut() {
            mix.push(c.bind(g, store, mode, trainable, binds)?);
        }
        let mut mix_norms = Vec::with_capacity(self.mix_norms.len());
        for n in &self.mix_norms {
            mix_norms.push(n.bind(g, store, trainable, binds)?);
        }
        let mut linears = Vec::with_capacity(self.linears.len());
        for l in self.linears.iter_mut() {
            linears.push(l.bind(g, store, mode, trainable, binds)?);
        }
        let mut linear_norms = Vec::with_capacity(self.linear_norms.len());
        for n in &self.linear_norms {
            linear_norms.push(n.bind(g, store, trainable, binds)?);
        }
        let head = self.head.bind(g, store, mode, trainable, binds)?;
        Ok(BoundTrunk {
            mix,
            mix_norms,
            linears,
            linear_norms,
            head,
        })
    }

    /// `[b, mix_len]` → `[b, head_dim]`
    pub(crate) fn apply(&self, g: &mut Graph<F>, bound: &BoundTrunk, x: NodeId) -> Result<NodeId, GanError> {
        let batch = g.shape(x)[0];
        let mut x = g.reshape(x, vec![batch, 1, self.mix_len])?;
        for (conv, norm) in bound.mix.iter().zip(&bound.mix_norms) {
            x = conv.apply(g, x)?;
            x = norm.apply(g, x)?;
            x = g.leaky_relu(x, F::from_f64(ACT_SLOPE));
        }
        let mut x = g.reshape(x, vec![batch, self.mix_channels * self.mix_len])?;
        for (linear, norm) in bound.linears.iter().zip(&bound.linear_norms) {
            x = linear.apply(g, x)?;
            x = norm.apply(g, x)?;
            x = g.leaky_relu(x, F::from_f64(ACT_SLOPE));
        }
        bound.head.apply(g, x)
    }

    pub(crate) fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        for c in &self.mix {
            c.export_state(out)?;
        }
        for l in &self.linears {
            l.export_state(out)?;
        }
        self.head.export_state(out)
    }

    pub(crate) fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        for c in self.mix.iter_mut() {
            c.import_state(store)?;
        }
        for l in self.linears.iter_mut() {
            l.import_state(store)?;
        }
        self.head.import_state(store)
    }
}

/// Node handles for the five policy logit heads of one forward pass.
pub struct PolicyHeads {
    /// `[b, 1]`
    pub side: NodeId,
    pub action: NodeId,
    pub mo: NodeId,
    /// `[b, 40]`
    pub price: NodeId,
    pub volume: NodeId,
}

pub struct GeneratorForward {
    pub heads: PolicyHeads,
    pub binds: Bindings,
}

pub struct GeneratorNet<F: Real> {
    pub widths: NetWidths,
    pub params: ParamStore<F>,
    prefix: String,
    enc: CondEncoder<F>,
    trunk: Trunk<F>,
}

impl<F: Real> GeneratorNet<F> {
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
            POLICY_LOGITS,
        )?;
        Ok(GeneratorNet {
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

    /// Builds the policy heads for a batch of (condition, seed) inputs.
    pub fn forward_graph(
        &mut self,
        g: &mut Graph<F>,
        hist: NodeId,
        quotes: NodeId,
        z: NodeId,
        mode: Mode,
        trainable: bool,
    ) -> Result<GeneratorForward, GanError> {
        let mut binds = Bindings::default();
        let enc_bound = self.enc.bind(g, &self.params, mode, trainable, &mut binds)?;
        let trunk_bound = self.trunk.bind(g, &self.params, mode, trainable, &mut binds)?;

        let enc_out = self.enc.apply(g, &enc_bound, hist, mode)?;
        let mixed_in = g.concat_cols(&[enc_out, quotes, z])?;
        let logits = self.trunk.apply(g, &trunk_bound, mixed_in)?;
        let heads = PolicyHeads {
            side: g.slice_cols(logits, 0, 1)?,
            action: g.slice_cols(logits, 1, 1)?,
            mo: g.slice_cols(logits, 2, 1)?,
            price: g.slice_cols(logits, 3, 40)?,
            volume: g.slice_cols(logits, 43, 40)?,
        };
        Ok(GeneratorForward { heads, binds })
    }

    /// Convenience: policies for a batch, detached from any graph.
    pub fn policies(
        &mut self,
        conds: &[&Condition],
        seeds: &[Seed<F>],
        mode: Mode,
    ) -> Result<Vec<Policy>, GanError> {
        assert_eq!(conds.len(), seeds.len(), "one seed per condition");
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(conds));
        let quotes = g.constant(quotes_tensor(conds));
        let z = g.constant(seeds_tensor(seeds));
        let fwd = self.forward_graph(&mut g, hist, quotes, z, mode, false)?;
        let policies = extract_policies(&g, &fwd.heads);
        for p in &policies {
            if !p.logit_side.is_finite()
                || !p.logits_price.iter().all(|v| v.is_finite())
                || !p.logits_volume.iter().all(|v| v.is_finite())
            {
                return Err(GanError::NonFinite { what: "policy logits", epoch: 0, step: 0 });
            }
        }
        Ok(policies)
    }

    /// Zeroes the head so every policy is exactly uniform; used to build
    /// by-chance reference models.
    pub fn zero_output_head(&mut self) -> Result<(), GanError> {
        zero_entry(&mut self.params, &format!("{}.head.w", self.prefix))?;
        zero_entry(&mut self.params, &format!("{}.head.b", self.prefix))?;
        Ok(())
    }

    /// Parameters plus persistent layer state (running statistics,
    /// spectral-norm vectors) for checkpointing.
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

pub struct CriticBound {
    enc: BoundEncoder,
    trunk: BoundTrunk,
    pub binds: Bindings,
}

pub struct CriticNet<F: Real> {
    pub widths: NetWidths,
    pub params: ParamStore<F>,
    prefix: String,
    enc: CondEncoder<F>,
    trunk: Trunk<F>,
}

impl<F: Real> CriticNet<F> {
    pub fn new(widths: NetWidths, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Self, GanError> {
        let mut params = ParamStore::new();
        let enc = CondEncoder::register(&mut params, rng, prefix, &widths)?;
        let mix_len = widths.enc3 + QUOTE_FEATURES + ORDER_FEATURES;
        let trunk = Trunk::register(
            &mut params,
            rng,
            prefix,
            mix_len,
            widths.mix_channels,
            &widths.critic_trunk.clone(),
            1,
        )?;
        Ok(CriticNet {
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

    /// Binds parameters once; the result can score several input batches in
    /// the same graph (real and fake sides of one critic step).
    pub fn bind(
        &mut self,
        g: &mut Graph<F>,
        mode: Mode,
        trainable: bool,
    ) -> Result<CriticBound, GanError> {
        let mut binds = Bindings::default();
        let enc = self.enc.bind(g, &self.params, mode, trainable, &mut binds)?;
        let trunk = self.trunk.bind(g, &self.params, mode, trainable, &mut binds)?;
        Ok(CriticBound { enc, trunk, binds })
    }

    /// Scores `[b]`: condition history/quotes plus the candidate order's
    /// five features (which may be a differentiable node).
    pub fn apply(
        &mut self,
        g: &mut Graph<F>,
        bound: &CriticBound,
        hist: NodeId,
        quotes: NodeId,
        order_feats: NodeId,
        mode: Mode,
    ) -> Result<NodeId, GanError> {
        let enc_out = self.enc.apply(g, &bound.enc, hist, mode)?;
        let mixed_in = g.concat_cols(&[enc_out, quotes, order_feats])?;
        let score = self.trunk.apply(g, &bound.trunk, mixed_in)?;
        let batch = g.shape(score)[0];
        Ok(g.reshape(score, vec![batch])?)
    }

    /// Convenience: detached scores for discrete orders.
    pub fn scores(
        &mut self,
        conds: &[&Condition],
        orders: &[Order],
        mode: Mode,
    ) -> Result<Vec<f64>, GanError> {
        assert_eq!(conds.len(), orders.len());
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(conds));
        let quotes = g.constant(quotes_tensor(conds));
        let feats = g.constant(order_feats_tensor(orders));
        let bound = self.bind(&mut g, mode, false)?;
        let out = self.apply(&mut g, &bound, hist, quotes, feats, mode)?;
        let scores = g.value(out).to_f64_vec();
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(GanError::NonFinite { what: "critic score", epoch: 0, step: 0 });
        }
        Ok(scores)
    }

    /// Zeroes the head so the critic outputs exactly 0 on any input; used by
    /// the saturation scenario.
    pub fn zero_output_head(&mut self) -> Result<(), GanError> {
        zero_entry(&mut self.params, &format!("{}.head.w", self.prefix))?;
        zero_entry(&mut self.params, &format!("{}.head.b", self.prefix))?;
        Ok(())
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

fn zero_entry<F: Real>(params: &mut ParamStore<F>, name: &str) -> Result<(), GanError> {
    let shape = params.get(name)?.shape().to_vec();
    params.set_value(name, Tensor::zeros(shape))?;
    Ok(())
}

/// `[b, 7, 20]` history channels.
pub fn hist_tensor<F: Real>(conds: &[&Condition]) -> Tensor<F> {
    let b = conds.len();
    let mut data = Vec::with_capacity(b * HISTORY_FEATURES * HISTORY_LEN);
    for cond in conds {
        data.extend(cond.history_channel_major().iter().map(|&v| F::from_f64(v)));
    }
    Tensor::from_vec(vec![b, HISTORY_FEATURES, HISTORY_LEN], data).expect("hist tensor shape")
}

/// `[b, 2]` current-quote features.
pub fn quotes_tensor<F: Real>(conds: &[&Condition]) -> Tensor<F> {
    let b = conds.len();
    let mut data = Vec::with_capacity(b * QUOTE_FEATURES);
    for cond in conds {
        data.extend(cond.current_quotes().iter().map(|&v| F::from_f64(v)));
    }
    Tensor::from_vec(vec![b, QUOTE_FEATURES], data).expect("quotes tensor shape")
}

/// `[b, 128]` seed batch.
pub fn seeds_tensor<F: Real>(seeds: &[Seed<F>]) -> Tensor<F> {
    let b = seeds.len();
    let mut data = Vec::with_capacity(b * SEED_DIM);
    for s in seeds {
        data.extend_from_slice(s.values());
    }
    Tensor::from_vec(vec![b, SEED_DIM], data).expect("seed tensor shape")
}

/// `[b, 5]` discrete-order features under the history-row convention.
pub fn order_feats_tensor<F: Real>(orders: &[Order]) -> Tensor<F> {
    let b = orders.len();
    let mut data = Vec::with_capacity(b * ORDER_FEATURES);
    for o in orders {
        data.extend(o.features().iter().map(|&v| F::from_f64(v)));
    }
    Tensor::from_vec(vec![b, ORDER_FEATURES], data).expect("order features shape")
}

/// Reads the head values of a forward pass into detached per-row policies.
pub fn extract_policies<F: Real>(g: &Graph<F>, heads: &PolicyHeads) -> Vec<Policy> {
    let batch = g.shape(heads.side)[0];
    let side = g.value(heads.side).to_f64_vec();
    let action = g.value(heads.action).to_f64_vec();
    let mo = g.value(heads.mo).to_f64_vec();
    let price = g.value(heads.price).to_f64_vec();
    let volume = g.value(heads.volume).to_f64_vec();
    (0..batch)
        .map(|i| {
            let mut p = Policy::uniform();
            p.logit_side = side[i];
            p.logit_action = action[i];
            p.logit_mo = mo[i];
            p.logits_price.copy_from_slice(&price[i * 40..(i + 1) * 40]);
            p.logits_volume.copy_from_slice(&volume[i * 40..(i + 1) * 40]);
            p
        })
        .collect()
}
