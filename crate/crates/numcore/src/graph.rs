//! Define-by-run reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding the eagerly
//! computed forward value plus whatever context its backward pass needs.
//! [`Graph::backward`] walks the tape in reverse insertion order, which is a
//! valid reverse topological order because inputs always precede outputs.
//!
//! The op set is exactly what the order-generation networks need: affine and
//! convolution kernels, pooling, the two normalization layers, the activation
//! and log-probability heads, and the scalar reductions that form losses.

use crate::error::NumError;
use crate::real::Real;
use crate::tensor::{idx2, idx3, Tensor};

/// Forward-pass mode.
///
/// `Train` uses batch statistics and advances persistent state (batch-norm
/// running statistics, spectral-norm power iterations). `Frozen` uses batch
/// statistics but leaves persistent state untouched, which makes repeated
/// evaluation pure — finite-difference checks rely on that. `Eval` uses the
/// stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Frozen,
    Eval,
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PadMode {
    Zero,
    Circular,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub pad_mode: PadMode,
}

/// Saved normalization context: per-group inverse standard deviations plus
/// the normalized activations, enough to run either normalization backward.
#[derive(Debug, Clone)]
struct NormCtx<F: Real> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
    /// Gradients flow through the batch statistics (train/frozen mode).
    through_stats: bool,
}

enum Op<F: Real> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Neg(NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, F),
    /// `a / s` with `s` a `[1]` node.
    DivByScalar { a: NodeId, s: NodeId },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, spec: ConvSpec },
    AvgPool1d { x: NodeId, window: usize, stride: usize },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, ctx: NormCtx<F> },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, ctx: NormCtx<F> },
    LeakyRelu(NodeId, F),
    Sigmoid(NodeId),
    LogSigmoid(NodeId),
    LogSoftmax(NodeId),
    GatherCol { x: NodeId, idx: Vec<usize> },
    SliceCols { x: NodeId, start: usize, len: usize },
    ConcatCols { parts: Vec<NodeId> },
    Reshape(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Largest-singular-value estimate `uᵀ W v` with `u`, `v` held constant.
    SnSigma { w: NodeId, u: Vec<F>, v: Vec<F> },
}

struct Node<F: Real> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node, or zeros when the node is unreachable from the loss.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor<F> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Binds a tensor as a leaf; its grad flag decides participation.
    pub fn leaf(&mut self, t: Tensor<F>) -> NodeId {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Binds a tensor as a non-differentiable constant.
    pub fn constant(&mut self, t: Tensor<F>) -> NodeId {
        let t = t.with_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.same_shape("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, Op::Mul(a, b), rg))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).map(|x| -x);
        let rg = self.rg(a);
        self.push(data, Op::Neg(a), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: F) -> NodeId {
        let data = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(data, Op::AddScalar(a), rg)
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: F) -> NodeId {
        let data = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(data, Op::MulScalar(a, c), rg)
    }

    /// `a / s` where `s` is a `[1]` node (used by spectral normalization).
    pub fn div_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, NumError> {
        if self.shape(s) != [1] {
            return Err(NumError::shapes("div_by_scalar", [1usize], self.shape(s)));
        }
        let sv = self.value(s).item();
        let data = self.value(a).map(|x| x / sv);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(data, Op::DivByScalar { a, s }, rg))
    }

    /// `y = x · wᵀ + b` for `x: [batch, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[1] || ws[0] != bs[0] {
            return Err(NumError::shapes(
                "linear: x [batch,in], w [out,in], b [out]",
                format!("in={}, out={}", ws.get(1).copied().unwrap_or(0), ws.first().copied().unwrap_or(0)),
                format!("x {xs:?}, w {ws:?}, b {bs:?}"),
            ));
        }
        let (batch, n_in, n_out) = (xs[0], xs[1], ws[0]);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![F::zero(); batch * n_out];
        for bi in 0..batch {
            let xrow = &xv[bi * n_in..(bi + 1) * n_in];
            for o in 0..n_out {
                let wrow = &wv[o * n_in..(o + 1) * n_in];
                let mut acc = bv[o];
                for i in 0..n_in {
                    acc += xrow[i] * wrow[i];
                }
                out[idx2(bi, o, n_out)] = acc;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::from_vec(vec![batch, n_out], out).expect("linear output shape");
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// 1-D cross-correlation over `x: [batch, in_ch, len]` with
    /// `w: [out_ch, in_ch, k]` and `b: [out_ch]`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        spec: ConvSpec,
    ) -> Result<NodeId, NumError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 || xs[1] != ws[1] || ws[0] != bs[0] {
            return Err(NumError::shapes(
                "conv1d: x [batch,ch,len], w [out,ch,k], b [out]",
                "matching channel/out dims",
                format!("x {xs:?}, w {ws:?}, b {bs:?}"),
            ));
        }
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(NumError::InvalidShape {
                context: "conv1d",
                detail: format!("stride {} and dilation {} must be positive", spec.stride, spec.dilation),
            });
        }
        let (batch, in_ch, len) = (xs[0], xs[1], xs[2]);
        let (out_ch, k) = (ws[0], ws[2]);
        let span = (k - 1) * spec.dilation + 1;
        let padded = len + 2 * spec.padding;
        if span > padded {
            return Err(NumError::InvalidShape {
                context: "conv1d",
                detail: format!(
                    "kernel span {span} (k={k}, dilation={}) exceeds padded input length {padded}",
                    spec.dilation
                ),
            });
        }
        let out_len = (padded - span) / spec.stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![F::zero(); batch * out_ch * out_len];
        for bi in 0..batch {
            for co in 0..out_ch {
                for t in 0..out_len {
                    let mut acc = bv[co];
                    let base = (t * spec.stride) as isize - spec.padding as isize;
                    for ci in 0..in_ch {
                        let xrow = &xv[idx3(bi, ci, 0, in_ch, len)..idx3(bi, ci, 0, in_ch, len) + len];
                        let wrow = &wv[idx3(co, ci, 0, in_ch, k)..idx3(co, ci, 0, in_ch, k) + k];
                        for (kk, &wk) in wrow.iter().enumerate() {
                            let src = base + (kk * spec.dilation) as isize;
                            match spec.pad_mode {
                                PadMode::Zero => {
                                    if src >= 0 && (src as usize) < len {
                                        acc += xrow[src as usize] * wk;
                                    }
                                }
                                PadMode::Circular => {
                                    let wrapped = src.rem_euclid(len as isize) as usize;
                                    acc += xrow[wrapped] * wk;
                                }
                            }
                        }
                    }
                    out[idx3(bi, co, t, out_ch, out_len)] = acc;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::from_vec(vec![batch, out_ch, out_len], out).expect("conv1d output shape");
        Ok(self.push(value, Op::Conv1d { x, w, b, spec }, rg))
    }

    /// Mean over sliding windows along the last axis of `x: [batch, ch, len]`.
    pub fn avg_pool1d(
        &mut self,
        x: NodeId,
        window: usize,
        stride: usize,
    ) -> Result<NodeId, NumError> {
        let xs = self.shape(x);
        if xs.len() != 3 {
            return Err(NumError::shapes("avg_pool1d", "[batch,ch,len]", xs));
        }
        let (batch, ch, len) = (xs[0], xs[1], xs[2]);
        if window == 0 || stride == 0 {
            return Err(NumError::InvalidShape {
                context: "avg_pool1d",
                detail: format!("window {window} and stride {stride} must be positive"),
            });
        }
        if window > len {
            return Err(NumError::InvalidShape {
                context: "avg_pool1d",
                detail: format!("window {window} exceeds input length {len}"),
            });
        }
        let out_len = (len - window) / stride + 1;
        let inv_w = F::one() / F::from_f64(window as f64);
        let xv = self.value(x).data();
        let mut out = vec![F::zero(); batch * ch * out_len];
        for bi in 0..batch {
            for c in 0..ch {
                let row = &xv[idx3(bi, c, 0, ch, len)..idx3(bi, c, 0, ch, len) + len];
                for t in 0..out_len {
                    let start = t * stride;
                    let mut acc = F::zero();
                    for &v in &row[start..start + window] {
                        acc += v;
                    }
                    out[idx3(bi, c, t, ch, out_len)] = acc * inv_w;
                }
            }
        }
        let rg = self.rg(x);
        let value = Tensor::from_vec(vec![batch, ch, out_len], out).expect("avg_pool1d output shape");
        Ok(self.push(value, Op::AvgPool1d { x, window, stride }, rg))
    }

    /// Batch normalization over `[batch, features]` (per feature) or
    /// `[batch, ch, len]` (per channel, statistics over batch and length).
    ///
    /// In `Train` mode the running statistics are updated in place with the
    /// given momentum; `Frozen` normalizes with batch statistics without
    /// touching them; `Eval` normalizes with the running statistics.
    /// Variances are biased (divide by N); the epsilon floor guards constant
    /// inputs.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut [F],
        running_var: &mut [F],
        momentum: F,
        eps: F,
        mode: Mode,
    ) -> Result<NodeId, NumError> {
        let xs = self.shape(x).to_vec();
        let (groups, group_len, batch) = match xs.len() {
            2 => (xs[1], xs[0], xs[0]),
            3 => (xs[1], xs[0] * xs[2], xs[0]),
            _ => return Err(NumError::shapes("batch_norm", "[b,f] or [b,c,l]", &xs)),
        };
        if self.shape(gamma) != [groups] || self.shape(beta) != [groups] {
            return Err(NumError::shapes(
                "batch_norm affine",
                [groups],
                format!("gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        if running_mean.len() != groups || running_var.len() != groups {
            return Err(NumError::shapes("batch_norm running stats", [groups], running_mean.len()));
        }
        let through_stats = !matches!(mode, Mode::Eval);
        if through_stats && batch < 2 {
            return Err(NumError::InvalidShape {
                context: "batch_norm",
                detail: format!("training mode needs batch >= 2, got {batch}"),
            });
        }

        let xv = self.value(x).data().to_vec();
        let n = F::from_f64(group_len as f64);
        let mut mean = vec![F::zero(); groups];
        let mut var = vec![F::zero(); groups];
        if through_stats {
            for_each_group(&xs, |g, i| mean[g] += xv[i]);
            for m in mean.iter_mut() {
                *m /= n;
            }
            for_each_group(&xs, |g, i| {
                let d = xv[i] - mean[g];
                var[g] += d * d;
            });
            for v in var.iter_mut() {
                *v /= n;
            }
            if matches!(mode, Mode::Train) {
                for g in 0..groups {
                    running_mean[g] = (F::one() - momentum) * running_mean[g] + momentum * mean[g];
                    running_var[g] = (F::one() - momentum) * running_var[g] + momentum * var[g];
                }
            }
        } else {
            mean.copy_from_slice(running_mean);
            var.copy_from_slice(running_var);
        }

        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![F::zero(); xv.len()];
        for_each_group(&xs, |g, i| xhat[i] = (xv[i] - mean[g]) * inv_std[g]);

        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = vec![F::zero(); xv.len()];
        for_each_group(&xs, |g, i| out[i] = gv[g] * xhat[i] + bv[g]);

        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = Tensor::from_vec(xs, out).expect("batch_norm output shape");
        let ctx = NormCtx {
            xhat,
            inv_std,
            through_stats,
        };
        Ok(self.push(value, Op::BatchNorm { x, gamma, beta, ctx }, rg))
    }

    /// Layer normalization: per-sample statistics over all non-batch axes.
    /// The affine is per feature for `[b,f]` inputs and per channel for
    /// `[b,c,l]` inputs.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: F,
    ) -> Result<NodeId, NumError> {
        let xs = self.shape(x).to_vec();
        let (batch, sample_len, groups) = match xs.len() {
            2 => (xs[0], xs[1], xs[1]),
            3 => (xs[0], xs[1] * xs[2], xs[1]),
            _ => return Err(NumError::shapes("layer_norm", "[b,f] or [b,c,l]", &xs)),
        };
        if self.shape(gamma) != [groups] || self.shape(beta) != [groups] {
            return Err(NumError::shapes(
                "layer_norm affine",
                [groups],
                format!("gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let xv = self.value(x).data().to_vec();
        let n = F::from_f64(sample_len as f64);
        let mut inv_std = vec![F::zero(); batch];
        let mut xhat = vec![F::zero(); xv.len()];
        for bi in 0..batch {
            let row = &xv[bi * sample_len..(bi + 1) * sample_len];
            let mut mean = F::zero();
            for &v in row {
                mean += v;
            }
            mean /= n;
            let mut var = F::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var /= n;
            let is = F::one() / (var + eps).sqrt();
            inv_std[bi] = is;
            for (j, &v) in row.iter().enumerate() {
                xhat[bi * sample_len + j] = (v - mean) * is;
            }
        }
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = vec![F::zero(); xv.len()];
        let per_group = sample_len / groups;
        for bi in 0..batch {
            for g in 0..groups {
                for j in 0..per_group {
                    let i = bi * sample_len + g * per_group + j;
                    out[i] = gv[g] * xhat[i] + bv[g];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = Tensor::from_vec(xs, out).expect("layer_norm output shape");
        let ctx = NormCtx {
            xhat,
            inv_std,
            through_stats: true,
        };
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, ctx }, rg))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: F) -> NodeId {
        let data = self.value(a).map(|x| if x > F::zero() { x } else { x * slope });
        let rg = self.rg(a);
        self.push(data, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).map(sigmoid_stable);
        let rg = self.rg(a);
        self.push(data, Op::Sigmoid(a), rg)
    }

    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).map(log_sigmoid_stable);
        let rg = self.rg(a);
        self.push(data, Op::LogSigmoid(a), rg)
    }

    /// Row-wise log-softmax over the last axis of a `[batch, n]` tensor.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let xs = self.shape(a);
        if xs.len() != 2 {
            return Err(NumError::shapes("log_softmax", "[batch,n]", xs));
        }
        let (batch, n) = (xs[0], xs[1]);
        let xv = self.value(a).data();
        let mut out = vec![F::zero(); xv.len()];
        for bi in 0..batch {
            let row = &xv[bi * n..(bi + 1) * n];
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut denom = F::zero();
            for &v in row {
                denom += (v - max).exp();
            }
            let log_denom = denom.ln() + max;
            for (j, &v) in row.iter().enumerate() {
                out[bi * n + j] = v - log_denom;
            }
        }
        let rg = self.rg(a);
        let value = Tensor::from_vec(vec![batch, n], out).expect("log_softmax output shape");
        Ok(self.push(value, Op::LogSoftmax(a), rg))
    }

    /// Picks one column per row: `x: [batch, n]`, `idx: [batch]` → `[batch]`.
    pub fn gather_col(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId, NumError> {
        let xs = self.shape(x);
        if xs.len() != 2 || idx.len() != xs[0] {
            return Err(NumError::shapes("gather_col", format!("[{}, n]", idx.len()), xs));
        }
        let n = xs[1];
        if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
            return Err(NumError::InvalidShape {
                context: "gather_col",
                detail: format!("index {bad} out of range for {n} columns"),
            });
        }
        let xv = self.value(x).data();
        let out: Vec<F> = idx.iter().enumerate().map(|(bi, &j)| xv[idx2(bi, j, n)]).collect();
        let rg = self.rg(x);
        let value = Tensor::from_vec(vec![idx.len()], out).expect("gather_col output shape");
        Ok(self.push(value, Op::GatherCol { x, idx }, rg))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NumError> {
        let xs = self.shape(x);
        if xs.len() != 2 || start + len > xs[1] {
            return Err(NumError::shapes(
                "slice_cols",
                format!("cols [{start}, {})", start + len),
                xs,
            ));
        }
        let (batch, n) = (xs[0], xs[1]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * len);
        for bi in 0..batch {
            out.extend_from_slice(&xv[bi * n + start..bi * n + start + len]);
        }
        let rg = self.rg(x);
        let value = Tensor::from_vec(vec![batch, len], out).expect("slice_cols output shape");
        Ok(self.push(value, Op::SliceCols { x, start, len }, rg))
    }

    /// Concatenates `[batch, n_i]` tensors along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumError> {
        if parts.is_empty() {
            return Err(NumError::InvalidShape {
                context: "concat_cols",
                detail: "no parts".into(),
            });
        }
        let batch = self.shape(parts[0])[0];
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != batch {
                return Err(NumError::shapes("concat_cols", format!("[{batch}, _]"), s));
            }
            total += s[1];
        }
        let mut out = Vec::with_capacity(batch * total);
        for bi in 0..batch {
            for &p in parts {
                let n = self.shape(p)[1];
                let pv = self.value(p).data();
                out.extend_from_slice(&pv[bi * n..(bi + 1) * n]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let value = Tensor::from_vec(vec![batch, total], out).expect("concat_cols output shape");
        Ok(self.push(value, Op::ConcatCols { parts: parts.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, NumError> {
        let value = self.value(x).reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total: F = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = F::from_f64(self.value(a).len() as f64);
        let total: F = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total / n), Op::MeanAll(a), rg)
    }

    /// Spectral-norm estimate `σ = uᵀ W v` with `u`, `v` treated as constants.
    /// `w` of rank > 2 is read as `[out, rest]`.
    pub fn sn_sigma(&mut self, w: NodeId, u: &[F], v: &[F]) -> Result<NodeId, NumError> {
        let ws = self.shape(w);
        let out_dim = ws[0];
        let rest: usize = ws[1..].iter().product();
        if u.len() != out_dim || v.len() != rest {
            return Err(NumError::shapes(
                "sn_sigma",
                format!("u [{out_dim}], v [{rest}]"),
                format!("u [{}], v [{}]", u.len(), v.len()),
            ));
        }
        let wv = self.value(w).data();
        let mut sigma = F::zero();
        for o in 0..out_dim {
            let row = &wv[o * rest..(o + 1) * rest];
            let mut acc = F::zero();
            for i in 0..rest {
                acc += row[i] * v[i];
            }
            sigma += u[o] * acc;
        }
        let rg = self.rg(w);
        Ok(self.push(
            Tensor::scalar(sigma),
            Op::SnSigma { w, u: u.to_vec(), v: v.to_vec() },
            rg,
        ))
    }

    fn same_shape(&self, context: &'static str, a: NodeId, b: NodeId) -> Result<(), NumError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumError::shapes(context, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Reverse-mode accumulation from a scalar loss.
    ///
    /// Nodes unreachable from the loss keep `None` gradients; callers that
    /// need dense parameter gradients use [`Gradients::get_or_zeros`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<F>, NumError> {
        if self.shape(loss) != [1] {
            return Err(NumError::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(F::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(NodeId(id), &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor<F>>], id: NodeId, delta: &[F]) {
        if !self.rg(id) {
            return;
        }
        let slot = &mut grads[id.0];
        match slot {
            Some(t) => {
                for (dst, &src) in t.data_mut().iter_mut().zip(delta) {
                    *dst += src;
                }
            }
            None => {
                let t = Tensor::from_vec(self.shape(id).to_vec(), delta.to_vec())
                    .expect("gradient shape matches node shape");
                *slot = Some(t);
            }
        }
    }

    fn propagate(
        &self,
        id: NodeId,
        g: &Tensor<F>,
        grads: &mut Vec<Option<Tensor<F>>>,
    ) -> Result<(), NumError> {
        let gv = g.data();
        match &self.nodes[id.0].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, gv);
                self.accum(grads, *b, gv);
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, gv);
                if self.rg(*b) {
                    let neg: Vec<F> = gv.iter().map(|&v| -v).collect();
                    self.accum(grads, *b, &neg);
                }
            }
            Op::Neg(a) => {
                if self.rg(*a) {
                    let neg: Vec<F> = gv.iter().map(|&v| -v).collect();
                    self.accum(grads, *a, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    let da: Vec<F> = gv.iter().zip(bv).map(|(&g, &b)| g * b).collect();
                    self.accum(grads, *a, &da);
                }
                if self.rg(*b) {
                    let av = self.value(*a).data();
                    let db: Vec<F> = gv.iter().zip(av).map(|(&g, &a)| g * a).collect();
                    self.accum(grads, *b, &db);
                }
            }
            Op::AddScalar(a) => self.accum(grads, *a, gv),
            Op::MulScalar(a, c) => {
                if self.rg(*a) {
                    let da: Vec<F> = gv.iter().map(|&v| v * *c).collect();
                    self.accum(grads, *a, &da);
                }
            }
            Op::DivByScalar { a, s } => {
                let sv = self.value(*s).item();
                if self.rg(*a) {
                    let da: Vec<F> = gv.iter().map(|&v| v / sv).collect();
                    self.accum(grads, *a, &da);
                }
                if self.rg(*s) {
                    let yv = self.value(id).data();
                    let mut ds = F::zero();
                    for (gi, yi) in gv.iter().zip(yv) {
                        ds += *gi * *yi;
                    }
                    ds = -ds / sv;
                    self.accum(grads, *s, &[ds]);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (batch, n_in) = (xs[0], xs[1]);
                let n_out = self.shape(*w)[0];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.rg(*x) {
                    let mut dx = vec![F::zero(); batch * n_in];
                    for bi in 0..batch {
                        let drow = &mut dx[bi * n_in..(bi + 1) * n_in];
                        for o in 0..n_out {
                            let go = gv[idx2(bi, o, n_out)];
                            let wrow = &wv[o * n_in..(o + 1) * n_in];
                            for i in 0..n_in {
                                drow[i] += go * wrow[i];
                            }
                        }
                    }
                    self.accum(grads, *x, &dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![F::zero(); n_out * n_in];
                    for bi in 0..batch {
                        let xrow = &xv[bi * n_in..(bi + 1) * n_in];
                        for o in 0..n_out {
                            let go = gv[idx2(bi, o, n_out)];
                            let drow = &mut dw[o * n_in..(o + 1) * n_in];
                            for i in 0..n_in {
                                drow[i] += go * xrow[i];
                            }
                        }
                    }
                    self.accum(grads, *w, &dw);
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); n_out];
                    for bi in 0..batch {
                        for o in 0..n_out {
                            db[o] += gv[idx2(bi, o, n_out)];
                        }
                    }
                    self.accum(grads, *b, &db);
                }
            }
            Op::Conv1d { x, w, b, spec } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (batch, in_ch, len) = (xs[0], xs[1], xs[2]);
                let (out_ch, k) = (ws[0], ws[2]);
                let out_len = self.shape(id)[2];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let need_dx = self.rg(*x);
                let need_dw = self.rg(*w);
                let mut dx = vec![F::zero(); if need_dx { batch * in_ch * len } else { 0 }];
                let mut dw = vec![F::zero(); if need_dw { out_ch * in_ch * k } else { 0 }];
                if need_dx || need_dw {
                    for bi in 0..batch {
                        for co in 0..out_ch {
                            for t in 0..out_len {
                                let go = gv[idx3(bi, co, t, out_ch, out_len)];
                                if go == F::zero() {
                                    continue;
                                }
                                let base = (t * spec.stride) as isize - spec.padding as isize;
                                for ci in 0..in_ch {
                                    for kk in 0..k {
                                        let src = base + (kk * spec.dilation) as isize;
                                        let src = match spec.pad_mode {
                                            PadMode::Zero => {
                                                if src < 0 || src as usize >= len {
                                                    continue;
                                                }
                                                src as usize
                                            }
                                            PadMode::Circular => src.rem_euclid(len as isize) as usize,
                                        };
                                        if need_dx {
                                            dx[idx3(bi, ci, src, in_ch, len)] +=
                                                go * wv[idx3(co, ci, kk, in_ch, k)];
                                        }
                                        if need_dw {
                                            dw[idx3(co, ci, kk, in_ch, k)] +=
                                                go * xv[idx3(bi, ci, src, in_ch, len)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if need_dx {
                    self.accum(grads, *x, &dx);
                }
                if need_dw {
                    self.accum(grads, *w, &dw);
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); out_ch];
                    for bi in 0..batch {
                        for co in 0..out_ch {
                            for t in 0..out_len {
                                db[co] += gv[idx3(bi, co, t, out_ch, out_len)];
                            }
                        }
                    }
                    self.accum(grads, *b, &db);
                }
            }
            Op::AvgPool1d { x, window, stride } => {
                if self.rg(*x) {
                    let xs = self.shape(*x);
                    let (batch, ch, len) = (xs[0], xs[1], xs[2]);
                    let out_len = self.shape(id)[2];
                    let inv_w = F::one() / F::from_f64(*window as f64);
                    let mut dx = vec![F::zero(); batch * ch * len];
                    for bi in 0..batch {
                        for c in 0..ch {
                            for t in 0..out_len {
                                let go = gv[idx3(bi, c, t, ch, out_len)] * inv_w;
                                let start = t * stride;
                                for j in start..start + window {
                                    dx[idx3(bi, c, j, ch, len)] += go;
                                }
                            }
                        }
                    }
                    self.accum(grads, *x, &dx);
                }
            }
            Op::BatchNorm { x, gamma, beta, ctx } => {
                let xs = self.shape(*x).to_vec();
                let groups = self.shape(*gamma)[0];
                let group_len = self.value(*x).len() / groups;
                let gv_affine = self.value(*gamma).data();
                if self.rg(*x) {
                    // dxhat, then per-group means when stats are in the graph.
                    let mut dxhat = vec![F::zero(); gv.len()];
                    for_each_group(&xs, |grp, i| dxhat[i] = gv[i] * gv_affine[grp]);
                    let mut dx = vec![F::zero(); gv.len()];
                    if ctx.through_stats {
                        let n = F::from_f64(group_len as f64);
                        let mut mean_dxhat = vec![F::zero(); groups];
                        let mut mean_dxhat_xhat = vec![F::zero(); groups];
                        for_each_group(&xs, |grp, i| {
                            mean_dxhat[grp] += dxhat[i];
                            mean_dxhat_xhat[grp] += dxhat[i] * ctx.xhat[i];
                        });
                        for grp in 0..groups {
                            mean_dxhat[grp] /= n;
                            mean_dxhat_xhat[grp] /= n;
                        }
                        for_each_group(&xs, |grp, i| {
                            dx[i] = ctx.inv_std[grp]
                                * (dxhat[i] - mean_dxhat[grp] - ctx.xhat[i] * mean_dxhat_xhat[grp]);
                        });
                    } else {
                        for_each_group(&xs, |grp, i| dx[i] = dxhat[i] * ctx.inv_std[grp]);
                    }
                    self.accum(grads, *x, &dx);
                }
                if self.rg(*gamma) {
                    let mut dgamma = vec![F::zero(); groups];
                    for_each_group(&xs, |grp, i| dgamma[grp] += gv[i] * ctx.xhat[i]);
                    self.accum(grads, *gamma, &dgamma);
                }
                if self.rg(*beta) {
                    let mut dbeta = vec![F::zero(); groups];
                    for_each_group(&xs, |grp, i| dbeta[grp] += gv[i]);
                    self.accum(grads, *beta, &dbeta);
                }
            }
            Op::LayerNorm { x, gamma, beta, ctx } => {
                let xs = self.shape(*x).to_vec();
                let batch = xs[0];
                let sample_len = self.value(*x).len() / batch;
                let groups = self.shape(*gamma)[0];
                let per_group = sample_len / groups;
                let gv_affine = self.value(*gamma).data();
                if self.rg(*x) {
                    let n = F::from_f64(sample_len as f64);
                    let mut dx = vec![F::zero(); gv.len()];
                    for bi in 0..batch {
                        let mut mean_dxhat = F::zero();
                        let mut mean_dxhat_xhat = F::zero();
                        for j in 0..sample_len {
                            let i = bi * sample_len + j;
                            let dxh = gv[i] * gv_affine[j / per_group];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * ctx.xhat[i];
                        }
                        mean_dxhat /= n;
                        mean_dxhat_xhat /= n;
                        for j in 0..sample_len {
                            let i = bi * sample_len + j;
                            let dxh = gv[i] * gv_affine[j / per_group];
                            dx[i] = ctx.inv_std[bi] * (dxh - mean_dxhat - ctx.xhat[i] * mean_dxhat_xhat);
                        }
                    }
                    self.accum(grads, *x, &dx);
                }
                if self.rg(*gamma) {
                    let mut dgamma = vec![F::zero(); groups];
                    for bi in 0..batch {
                        for j in 0..sample_len {
                            let i = bi * sample_len + j;
                            dgamma[j / per_group] += gv[i] * ctx.xhat[i];
                        }
                    }
                    self.accum(grads, *gamma, &dgamma);
                }
                if self.rg(*beta) {
                    let mut dbeta = vec![F::zero(); groups];
                    for bi in 0..batch {
                        for j in 0..sample_len {
                            dbeta[j / per_group] += gv[bi * sample_len + j];
                        }
                    }
                    self.accum(grads, *beta, &dbeta);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.rg(*a) {
                    let av = self.value(*a).data();
                    let da: Vec<F> = gv
                        .iter()
                        .zip(av)
                        .map(|(&g, &x)| if x > F::zero() { g } else { g * *slope })
                        .collect();
                    self.accum(grads, *a, &da);
                }
            }
            Op::Sigmoid(a) => {
                if self.rg(*a) {
                    let yv = self.value(id).data();
                    let da: Vec<F> = gv
                        .iter()
                        .zip(yv)
                        .map(|(&g, &y)| g * y * (F::one() - y))
                        .collect();
                    self.accum(grads, *a, &da);
                }
            }
            Op::LogSigmoid(a) => {
                if self.rg(*a) {
                    let yv = self.value(id).data();
                    // d/dx log σ(x) = 1 − σ(x) = 1 − exp(y)
                    let da: Vec<F> = gv
                        .iter()
                        .zip(yv)
                        .map(|(&g, &y)| g * (F::one() - y.exp()))
                        .collect();
                    self.accum(grads, *a, &da);
                }
            }
            Op::LogSoftmax(a) => {
                if self.rg(*a) {
                    let xs = self.shape(id);
                    let (batch, n) = (xs[0], xs[1]);
                    let yv = self.value(id).data();
                    let mut da = vec![F::zero(); gv.len()];
                    for bi in 0..batch {
                        let mut gsum = F::zero();
                        for j in 0..n {
                            gsum += gv[idx2(bi, j, n)];
                        }
                        for j in 0..n {
                            let i = idx2(bi, j, n);
                            da[i] = gv[i] - yv[i].exp() * gsum;
                        }
                    }
                    self.accum(grads, *a, &da);
                }
            }
            Op::GatherCol { x, idx } => {
                if self.rg(*x) {
                    let n = self.shape(*x)[1];
                    let mut dx = vec![F::zero(); self.value(*x).len()];
                    for (bi, &j) in idx.iter().enumerate() {
                        dx[idx2(bi, j, n)] += gv[bi];
                    }
                    self.accum(grads, *x, &dx);
                }
            }
            Op::SliceCols { x, start, len } => {
                if self.rg(*x) {
                    let n = self.shape(*x)[1];
                    let batch = self.shape(*x)[0];
                    let mut dx = vec![F::zero(); self.value(*x).len()];
                    for bi in 0..batch {
                        for j in 0..*len {
                            dx[idx2(bi, start + j, n)] += gv[idx2(bi, j, *len)];
                        }
                    }
                    self.accum(grads, *x, &dx);
                }
            }
            Op::ConcatCols { parts } => {
                let batch = self.shape(id)[0];
                let total = self.shape(id)[1];
                let mut offset = 0;
                for &p in parts {
                    let n = self.shape(p)[1];
                    if self.rg(p) {
                        let mut dp = vec![F::zero(); batch * n];
                        for bi in 0..batch {
                            for j in 0..n {
                                dp[idx2(bi, j, n)] = gv[idx2(bi, offset + j, total)];
                            }
                        }
                        self.accum(grads, p, &dp);
                    }
                    offset += n;
                }
            }
            Op::Reshape(x) => self.accum(grads, *x, gv),
            Op::SumAll(a) => {
                if self.rg(*a) {
                    let da = vec![gv[0]; self.value(*a).len()];
                    self.accum(grads, *a, &da);
                }
            }
            Op::MeanAll(a) => {
                if self.rg(*a) {
                    let n = F::from_f64(self.value(*a).len() as f64);
                    let da = vec![gv[0] / n; self.value(*a).len()];
                    self.accum(grads, *a, &da);
                }
            }
            Op::SnSigma { w, u, v } => {
                if self.rg(*w) {
                    let rest = v.len();
                    let mut dw = vec![F::zero(); u.len() * rest];
                    let g0 = gv[0];
                    for (o, &uo) in u.iter().enumerate() {
                        let row = &mut dw[o * rest..(o + 1) * rest];
                        for (i, &vi) in v.iter().enumerate() {
                            row[i] = g0 * uo * vi;
                        }
                    }
                    self.accum(grads, *w, &dw);
                }
            }
        }
        Ok(())
    }
}

/// Calls `f(group, flat_index)` over a `[b,f]` (group = feature) or
/// `[b,c,l]` (group = channel) tensor.
fn for_each_group<F: FnMut(usize, usize)>(shape: &[usize], mut f: F) {
    match shape.len() {
        2 => {
            let (b, n) = (shape[0], shape[1]);
            for bi in 0..b {
                for j in 0..n {
                    f(j, bi * n + j);
                }
            }
        }
        3 => {
            let (b, c, l) = (shape[0], shape[1], shape[2]);
            for bi in 0..b {
                for ci in 0..c {
                    for t in 0..l {
                        f(ci, (bi * c + ci) * l + t);
                    }
                }
            }
        }
        _ => unreachable!("normalization shapes are rank 2 or 3"),
    }
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data: Vec<F> = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("zip_map preserves shape")
}

fn sigmoid_stable<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn log_sigmoid_stable<F: Real>(x: F) -> F {
    if x >= F::zero() {
        -(F::one() + (-x).exp()).ln()
    } else {
        x - (F::one() + x.exp()).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, vals: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(vec![rows, cols], vals.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_passthrough() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(1, 2, &[1.0, 2.0]));
        let w = g.leaf(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let b = g.leaf(Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap());
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_direct_substitution() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(1, 2, &[1.0, 1.0]));
        let w = g.leaf(t2(1, 2, &[2.0, 3.0]));
        let b = g.leaf(Tensor::from_vec(vec![1], vec![1.0]).unwrap());
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[6.0]);
    }

    #[test]
    fn linear_shape_mismatch_reports_dims() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(1, 3, &[1.0, 1.0, 1.0]));
        let w = g.leaf(t2(1, 2, &[2.0, 3.0]));
        let b = g.leaf(Tensor::from_vec(vec![1], vec![1.0]).unwrap());
        let err = g.linear(x, w, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]"), "got: {msg}");
    }

    #[test]
    fn conv_same_length_with_pad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 20], (0..20).map(|v| v as f64).collect()).unwrap());
        let w = g.leaf(Tensor::from_vec(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let spec = ConvSpec { stride: 1, dilation: 1, padding: 1, pad_mode: PadMode::Zero };
        let y = g.conv1d(x, w, b, spec).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 20]);
    }

    #[test]
    fn conv_dilated_receptive_field() {
        // kernel 3 with dilation 2 spans 5 inputs: valid conv over len 5 gives 1 output
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let w = g.leaf(Tensor::from_vec(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let spec = ConvSpec { stride: 1, dilation: 2, padding: 0, pad_mode: PadMode::Zero };
        let y = g.conv1d(x, w, b, spec).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 1]);
        assert_eq!(g.value(y).data(), &[1.0 + 3.0 + 5.0]);
    }

    #[test]
    fn conv_circular_matches_index_oracle() {
        let xv = [1.0, 2.0, 3.0, 4.0];
        let wv = [0.5, -1.0, 2.0];
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 4], xv.to_vec()).unwrap());
        let w = g.leaf(Tensor::from_vec(vec![1, 1, 3], wv.to_vec()).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let spec = ConvSpec { stride: 1, dilation: 1, padding: 1, pad_mode: PadMode::Circular };
        let y = g.conv1d(x, w, b, spec).unwrap();
        // direct index-wise summation with wrap-around
        let mut expect = [0.0; 4];
        for (t, e) in expect.iter_mut().enumerate() {
            for (kk, &wk) in wv.iter().enumerate() {
                let src = (t as isize + kk as isize - 1).rem_euclid(4) as usize;
                *e += xv[src] * wk;
            }
        }
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_kernel_larger_than_padded_input_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.leaf(Tensor::from_vec(vec![1, 1, 5], vec![1.0; 5]).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let spec = ConvSpec { stride: 1, dilation: 1, padding: 0, pad_mode: PadMode::Zero };
        assert!(g.conv1d(x, w, b, spec).is_err());
    }

    #[test]
    fn avg_pool_basic_and_constant() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.avg_pool1d(x, 2, 2).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, 3.5]);

        let c = g.leaf(Tensor::filled(vec![1, 1, 6], 7.0));
        let yc = g.avg_pool1d(c, 3, 1).unwrap();
        assert!(g.value(yc).data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn avg_pool_zero_window_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert!(g.avg_pool1d(x, 0, 1).is_err());
    }

    #[test]
    fn batch_norm_two_sample_feature() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(2, 1, &[1.0, 3.0]));
        let gamma = g.leaf(Tensor::from_vec(vec![1], vec![1.0]).unwrap());
        let beta = g.leaf(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let mut rm = vec![0.0];
        let mut rv = vec![1.0];
        let y = g
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, 0.1, 1e-5, Mode::Train)
            .unwrap();
        let out = g.value(y).data();
        assert!((out[0] + 1.0).abs() < 1e-4, "{out:?}");
        assert!((out[1] - 1.0).abs() < 1e-4, "{out:?}");
        // running stats moved toward batch stats
        assert!((rm[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_constant_batch_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(4, 2, &[5.0; 8]));
        let gamma = g.leaf(Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap());
        let beta = g.leaf(Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap());
        let mut rm = vec![0.0; 2];
        let mut rv = vec![1.0; 2];
        let y = g
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, 0.1, 1e-5, Mode::Train)
            .unwrap();
        assert!(g.value(y).data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn batch_norm_single_sample_training_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(1, 2, &[1.0, 2.0]));
        let gamma = g.leaf(Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap());
        let beta = g.leaf(Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap());
        let mut rm = vec![0.0; 2];
        let mut rv = vec![1.0; 2];
        assert!(g
            .batch_norm(x, gamma, beta, &mut rm, &mut rv, 0.1, 1e-5, Mode::Train)
            .is_err());
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::from_vec(vec![3], vec![2.0, -1.0, 0.5]).unwrap().with_grad(true));
        let loss = g.sum_all(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_dot_gives_constant_factor() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(t2(1, 3, &[2.0, -1.0, 0.5]).with_grad(true));
        let x = g.constant(t2(1, 3, &[4.0, 5.0, 6.0]));
        let prod = g.mul(w, x).unwrap();
        let loss = g.sum_all(prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(t2(1, 3, &[2.0, -1.0, 0.5]).with_grad(true));
        assert!(matches!(g.backward(w), Err(NumError::NonScalarLoss { .. })));
    }

    #[test]
    fn unreachable_parameter_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(t2(1, 3, &[2.0, -1.0, 0.5]).with_grad(true));
        let unused = g.leaf(t2(1, 2, &[1.0, 1.0]).with_grad(true));
        let loss = g.sum_all(w);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.get_or_zeros(unused, &[1, 2]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t2(2, 3, &[1.0, 2.0, 3.0, -5.0, 0.0, 5.0]));
        let y = g.log_softmax(x).unwrap();
        for row in 0..2 {
            let total: f64 = (0..3).map(|j| g.value(y).data()[row * 3 + j].exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_all_of_scalar_slice() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![4], vec![1.0, 2.0, 3.0, 6.0]).unwrap());
        let y = g.mean_all(x);
        assert_eq!(g.value(y).item(), 3.0);
    }
}
