//! Layer descriptors over a net-owned parameter store.
//!
//! A descriptor holds a parameter name prefix plus its persistent per-layer
//! state (spectral-norm vectors, batch-norm running statistics); tensors
//! themselves live in the owning net's `ParamStore`. Binding a layer puts
//! its parameters on a graph as leaves — with the spectral-norm division
//! applied in-graph so gradients flow through it — and records the leaves so
//! gradients can be collected by name after `backward`.

use std::collections::BTreeMap;

use numcore::graph::{ConvSpec, Graph, Mode, NodeId, PadMode};
use numcore::rng::derive_rng;
use numcore::sn::spectral_normalize_node;
use numcore::{Gradients, ParamStore, Real, SpectralNormState, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::error::GanError;

/// Leaky-ReLU slope used throughout both networks.
pub const ACT_SLOPE: f64 = 0.1;
/// Batch-norm running-statistics momentum. Fixed, not configurable.
pub const BN_MOMENTUM: f64 = 0.1;
/// Epsilon floor for both normalization layers.
pub const NORM_EPS: f64 = 1e-5;

/// Trainable leaves bound into the current graph, by parameter name.
#[derive(Debug, Default)]
pub struct Bindings {
    leaves: Vec<(String, NodeId, Vec<usize>)>,
}

impl Bindings {
    pub fn push(&mut self, name: String, id: NodeId, shape: Vec<usize>) {
        self.leaves.push((name, id, shape));
    }

    pub fn merge(&mut self, other: Bindings) {
        self.leaves.extend(other.leaves);
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Dense per-parameter gradients; parameters unreachable from the loss
    /// get zeros.
    pub fn grads_by_name<F: Real>(&self, grads: &Gradients<F>) -> BTreeMap<String, Tensor<F>> {
        self.leaves
            .iter()
            .map(|(name, id, shape)| (name.clone(), grads.get_or_zeros(*id, shape)))
            .collect()
    }
}

/// Scaled-uniform fan-in initialization.
fn init_tensor<F: Real>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let bound = F::from_f64(1.0 / (fan_in as f64).sqrt());
    Tensor::from_fn(shape, |_| F::sample_uniform_sym(rng, bound)).with_grad(true)
}

fn bind_param<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    name: &str,
    trainable: bool,
    binds: &mut Bindings,
) -> Result<NodeId, GanError> {
    let tensor = store.get(name)?.clone();
    let shape = tensor.shape().to_vec();
    let rg = trainable && tensor.requires_grad();
    let id = g.leaf(tensor.with_grad(rg));
    if rg {
        binds.push(name.to_string(), id, shape);
    }
    Ok(id)
}

pub struct LinearDesc<F: Real> {
    name: String,
    sn: SpectralNormState<F>,
}

pub struct BoundLinear {
    w_bar: NodeId,
    b: NodeId,
}

impl<F: Real> LinearDesc<F> {
    pub fn register(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self, GanError> {
        store.insert(&format!("{name}.w"), init_tensor(vec![out_dim, in_dim], in_dim, rng))?;
        store.insert(&format!("{name}.b"), init_tensor(vec![out_dim], in_dim, rng))?;
        let mut sn = SpectralNormState::new(out_dim, in_dim, rng);
        // Settle u/v against the fresh weight so evaluation before the first
        // training step sees a sane σ̂.
        sn.power_iterate(store.get(&format!("{name}.w"))?, 1)?;
        Ok(LinearDesc {
            name: name.to_string(),
            sn,
        })
    }

    pub fn bind(
        &mut self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        mode: Mode,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundLinear, GanError> {
        let w = bind_param(g, store, &format!("{}.w", self.name), trainable, binds)?;
        let w_bar = spectral_normalize_node(g, w, &mut self.sn, mode)?;
        let b = bind_param(g, store, &format!("{}.b", self.name), trainable, binds)?;
        Ok(BoundLinear { w_bar, b })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sn_mut(&mut self) -> &mut SpectralNormState<F> {
        &mut self.sn
    }

    pub fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        export_sn(&self.sn, &self.name, out)
    }

    pub fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        import_sn(&mut self.sn, &self.name, store)
    }
}

impl BoundLinear {
    pub fn apply<F: Real>(&self, g: &mut Graph<F>, x: NodeId) -> Result<NodeId, GanError> {
        Ok(g.linear(x, self.w_bar, self.b)?)
    }
}

pub struct Conv1dDesc<F: Real> {
    name: String,
    spec: ConvSpec,
    sn: SpectralNormState<F>,
}

pub struct BoundConv {
    w_bar: NodeId,
    b: NodeId,
    spec: ConvSpec,
}

impl<F: Real> Conv1dDesc<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        spec: ConvSpec,
    ) -> Result<Self, GanError> {
        let fan_in = in_ch * kernel;
        store.insert(
            &format!("{name}.w"),
            init_tensor(vec![out_ch, in_ch, kernel], fan_in, rng),
        )?;
        store.insert(&format!("{name}.b"), init_tensor(vec![out_ch], fan_in, rng))?;
        let mut sn = SpectralNormState::new(out_ch, in_ch * kernel, rng);
        sn.power_iterate(store.get(&format!("{name}.w"))?, 1)?;
        Ok(Conv1dDesc {
            name: name.to_string(),
            spec,
            sn,
        })
    }

    pub fn bind(
        &mut self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        mode: Mode,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundConv, GanError> {
        let w = bind_param(g, store, &format!("{}.w", self.name), trainable, binds)?;
        let w_bar = spectral_normalize_node(g, w, &mut self.sn, mode)?;
        let b = bind_param(g, store, &format!("{}.b", self.name), trainable, binds)?;
        Ok(BoundConv { w_bar, b, spec: self.spec })
    }

    pub fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        export_sn(&self.sn, &self.name, out)
    }

    pub fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        import_sn(&mut self.sn, &self.name, store)
    }
}

impl BoundConv {
    pub fn apply<F: Real>(&self, g: &mut Graph<F>, x: NodeId) -> Result<NodeId, GanError> {
        Ok(g.conv1d(x, self.w_bar, self.b, self.spec)?)
    }
}

pub struct BatchNormDesc<F: Real> {
    name: String,
    running_mean: Vec<F>,
    running_var: Vec<F>,
}

pub struct BoundBn {
    gamma: NodeId,
    beta: NodeId,
}

impl<F: Real> BatchNormDesc<F> {
    pub fn register(
        store: &mut ParamStore<F>,
        name: &str,
        channels: usize,
    ) -> Result<Self, GanError> {
        store.insert(&format!("{name}.gamma"), Tensor::filled(vec![channels], F::one()).with_grad(true))?;
        store.insert(&format!("{name}.beta"), Tensor::zeros(vec![channels]).with_grad(true))?;
        Ok(BatchNormDesc {
            name: name.to_string(),
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
        })
    }

    pub fn bind(
        &mut self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundBn, GanError> {
        let gamma = bind_param(g, store, &format!("{}.gamma", self.name), trainable, binds)?;
        let beta = bind_param(g, store, &format!("{}.beta", self.name), trainable, binds)?;
        Ok(BoundBn { gamma, beta })
    }

    pub fn apply(
        &mut self,
        g: &mut Graph<F>,
        bound: &BoundBn,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId, GanError> {
        Ok(g.batch_norm(
            x,
            bound.gamma,
            bound.beta,
            &mut self.running_mean,
            &mut self.running_var,
            F::from_f64(BN_MOMENTUM),
            F::from_f64(NORM_EPS),
            mode,
        )?)
    }

    pub fn export_state(&self, out: &mut ParamStore<F>) -> Result<(), GanError> {
        out.insert(
            &format!("{}.running_mean", self.name),
            Tensor::from_vec(vec![self.running_mean.len()], self.running_mean.clone())?,
        )?;
        out.insert(
            &format!("{}.running_var", self.name),
            Tensor::from_vec(vec![self.running_var.len()], self.running_var.clone())?,
        )?;
        Ok(())
    }

    pub fn import_state(&mut self, store: &ParamStore<F>) -> Result<(), GanError> {
        self.running_mean = store.get(&format!("{}.running_mean", self.name))?.data().to_vec();
        self.running_var = store.get(&format!("{}.running_var", self.name))?.data().to_vec();
        Ok(())
    }
}

pub struct LayerNormDesc {
    name: String,
}

pub struct BoundLn {
    gamma: NodeId,
    beta: NodeId,
}

impl LayerNormDesc {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        groups: usize,
    ) -> Result<Self, GanError> {
        store.insert(&format!("{name}.gamma"), Tensor::filled(vec![groups], F::one()).with_grad(true))?;
        store.insert(&format!("{name}.beta"), Tensor::zeros(vec![groups]).with_grad(true))?;
        Ok(LayerNormDesc { name: name.to_string() })
    }

    pub fn bind<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        trainable: bool,
        binds: &mut Bindings,
    ) -> Result<BoundLn, GanError> {
        let gamma = bind_param(g, store, &format!("{}.gamma", self.name), trainable, binds)?;
        let beta = bind_param(g, store, &format!("{}.beta", self.name), trainable, binds)?;
        Ok(BoundLn { gamma, beta })
    }
}

impl BoundLn {
    pub fn apply<F: Real>(&self, g: &mut Graph<F>, x: NodeId) -> Result<NodeId, GanError> {
        Ok(g.layer_norm(x, self.gamma, self.beta, F::from_f64(NORM_EPS))?)
    }
}

fn export_sn<F: Real>(
    sn: &SpectralNormState<F>,
    name: &str,
    out: &mut ParamStore<F>,
) -> Result<(), GanError> {
    out.insert(&format!("{name}.sn.u"), Tensor::from_vec(vec![sn.u().len()], sn.u().to_vec())?)?;
    out.insert(&format!("{name}.sn.v"), Tensor::from_vec(vec![sn.v().len()], sn.v().to_vec())?)?;
    Ok(())
}

fn import_sn<F: Real>(
    sn: &mut SpectralNormState<F>,
    name: &str,
    store: &ParamStore<F>,
) -> Result<(), GanError> {
    let u = store.get(&format!("{name}.sn.u"))?.data().to_vec();
    let v = store.get(&format!("{name}.sn.v"))?.data().to_vec();
    let iters = sn.iters_per_step;
    *sn = SpectralNormState::from_vectors(u, v, iters);
    Ok(())
}

/// Standard zero-padded same-length conv spec.
pub fn same_conv_spec() -> ConvSpec {
    ConvSpec {
        stride: 1,
        dilation: 1,
        padding: 1,
        pad_mode: PadMode::Zero,
    }
}

/// Circular dilated conv spec used by the mixing stage.
pub fn circular_conv_spec(dilation: usize) -> ConvSpec {
    ConvSpec {
        stride: 1,
        dilation,
        padding: dilation,
        pad_mode: PadMode::Circular,
    }
}

/// Dedicated init stream for a network prefix.
pub fn init_rng(master_seed: u64, prefix: &str) -> ChaCha8Rng {
    derive_rng(master_seed, &format!("init.{prefix}"))
}

/// Convenience used by tests to perturb stored tensors.
pub fn randomize_store<F: Real>(store: &mut ParamStore<F>, rng: &mut ChaCha8Rng, scale: f64) {
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    for name in names {
        let t = store.get_mut(&name).unwrap();
        for v in t.data_mut() {
            *v = F::sample_uniform_sym(rng, F::from_f64(scale));
        }
    }
}
