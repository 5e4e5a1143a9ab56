use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::ops::{self, BatchNormCache, Conv2dSpec};
use crate::tensor::{ParamId, ParamStore, Scalar, Shape, Tensor};
use crate::wavelet;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Frozen running statistics.
    Eval,
}

/// Multiply-accumulates executed by the counted primitives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCount {
    pub conv: u64,
    pub dwt: u64,
    pub linear: u64,
}

impl MacCount {
    pub fn total(&self) -> u64 {
        self.conv + self.dwt + self.linear
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        spec: Conv2dSpec,
    },
    BatchNorm {
        x: NodeId,
        alpha: NodeId,
        beta: NodeId,
        cache: BatchNormCache<T>,
    },
    BatchNormFrozen {
        x: NodeId,
        alpha: NodeId,
        beta: NodeId,
        mean: Vec<T>,
        var: Vec<T>,
        eps: T,
    },
    LeakyRelu {
        x: NodeId,
        slope: T,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Channels {
        x: NodeId,
        start: usize,
    },
    ScaleBy {
        x: NodeId,
        s: NodeId,
    },
    MulConst {
        x: NodeId,
        c: T,
    },
    DetailApprox {
        x: NodeId,
        g: Vec<T>,
        h: Vec<T>,
    },
    CsaAlign {
        ft: NodeId,
        offsets: NodeId,
        u: NodeId,
    },
    SoftmaxChannels {
        x: NodeId,
    },
    SrfAggregate {
        f: NodeId,
        w: NodeId,
    },
    GlobalAvgPool {
        x: NodeId,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    Mse {
        a: NodeId,
        b: NodeId,
    },
    Crop {
        x: NodeId,
        top: usize,
        left: usize,
    },
    Sum {
        x: NodeId,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    scope: Rc<str>,
}

/// Reverse-mode tape over one forward pass.
///
/// The graph borrows the model's [`ParamStore`] mutably: parameter leaves
/// read their values from it, batchnorm writes running statistics back in
/// training mode, and [`Graph::backward`] accumulates parameter gradients
/// into it.
pub struct Graph<'s, T: Scalar> {
    store: &'s mut ParamStore<T>,
    mode: Mode,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    param_nodes: HashMap<ParamId, NodeId>,
    scopes: Vec<String>,
    scope: Rc<str>,
    macs: MacCount,
}

pub(crate) const BN_MOMENTUM: f64 = 0.1;

impl<'s, T: Scalar> Graph<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, mode: Mode) -> Self {
        Graph {
            store,
            mode,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_nodes: HashMap::new(),
            scopes: Vec::new(),
            scope: Rc::from(""),
            macs: MacCount::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn macs(&self) -> MacCount {
        self.macs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push_scope(&mut self, name: impl Into<String>) {
        self.scopes.push(name.into());
        self.scope = Rc::from(self.scopes.join("."));
    }

    pub fn pop_scope(&mut self) {
        self.scopes.pop();
        self.scope = Rc::from(self.scopes.join("."));
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            scope: self.scope.clone(),
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    /// Constant input; no gradient is computed for it.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is kept and readable through [`Graph::grad`].
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let p = self.store.get(id);
        let (value, trainable) = (p.value.clone(), p.trainable);
        let node = self.push(value, Op::Param(id), trainable);
        self.param_nodes.insert(id, node);
        node
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, spec: Conv2dSpec) -> Result<NodeId> {
        let out = ops::conv2d(self.value(x), self.value(w), spec)?;
        let (os, ks) = (out.shape(), self.shape(w));
        self.macs.conv += (os.numel() * ks.item()) as u64;
        let ng = self.needs(&[x, w]);
        Ok(self.push(out, Op::Conv2d { x, w, spec }, ng))
    }

    /// Batchnorm with batch statistics in training mode and the running
    /// statistics `stats = (mean, var)` in evaluation mode.
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        alpha: NodeId,
        beta: NodeId,
        stats: (ParamId, ParamId),
        eps: T,
    ) -> Result<NodeId> {
        let a = self.value(alpha).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let ng = self.needs(&[x, alpha, beta]);
        match self.mode {
            Mode::Train => {
                let (out, cache) = ops::batchnorm2d(self.value(x), &a, &b, eps)?;
                let m = T::of(BN_MOMENTUM);
                let keep = T::one() - m;
                let mean = self.store.value_mut(stats.0).data_mut();
                for (r, &v) in mean.iter_mut().zip(&cache.mean) {
                    *r = keep * *r + m * v;
                }
                let var = self.store.value_mut(stats.1).data_mut();
                for (r, &v) in var.iter_mut().zip(&cache.var_unbiased) {
                    *r = keep * *r + m * v;
                }
                Ok(self.push(
                    out,
                    Op::BatchNorm {
                        x,
                        alpha,
                        beta,
                        cache,
                    },
                    ng,
                ))
            }
            Mode::Eval => {
                let mean = self.store.value(stats.0).data().to_vec();
                let var = self.store.value(stats.1).data().to_vec();
                let out = ops::batchnorm2d_frozen(self.value(x), &a, &b, &mean, &var, eps)?;
                Ok(self.push(
                    out,
                    Op::BatchNormFrozen {
                        x,
                        alpha,
                        beta,
                        mean,
                        var,
                        eps,
                    },
                    ng,
                ))
            }
        }
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: T) -> NodeId {
        let out = ops::leaky_relu(self.value(x), slope);
        let ng = self.needs(&[x]);
        self.push(out, Op::LeakyRelu { x, slope }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, ng))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Concat { a, b }, ng))
    }

    pub fn channels(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let out = self.value(x).channels(start, len)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::Channels { x, start }, ng))
    }

    /// Multiplies every entry of `x` by the single-element node `s`.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale_by expects a single-element scale"));
        }
        let k = self.value(s).data()[0];
        let out = self.value(x).scale(k);
        let ng = self.needs(&[x, s]);
        Ok(self.push(out, Op::ScaleBy { x, s }, ng))
    }

    pub fn mul_const(&mut self, x: NodeId, c: T) -> NodeId {
        let out = self.value(x).scale(c);
        let ng = self.needs(&[x]);
        self.push(out, Op::MulConst { x, c }, ng)
    }

    /// Separable stride-2 analysis keeping the diagonal-detail (HH) and
    /// approximation (LL) subbands, stacked as `[HH, LL]` on channels.
    /// `filters` are the fixed low/high-pass parameters.
    pub fn detail_approx(&mut self, x: NodeId, filters: (ParamId, ParamId)) -> Result<NodeId> {
        let g = self.store.value(filters.0).data().to_vec();
        let h = self.store.value(filters.1).data().to_vec();
        let (out, taps) = wavelet::detail_approx(self.value(x), &g, &h)?;
        self.macs.dwt += wavelet::lifting_units(taps);
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::DetailApprox { x, g, h }, ng))
    }

    pub fn csa_align(&mut self, ft: NodeId, offsets: NodeId, u: NodeId) -> Result<NodeId> {
        let out = ops::csa_align(self.value(ft), self.value(offsets), self.value(u))?;
        let ng = self.needs(&[ft, offsets, u]);
        Ok(self.push(out, Op::CsaAlign { ft, offsets, u }, ng))
    }

    pub fn softmax_channels(&mut self, x: NodeId) -> NodeId {
        let out = ops::softmax_channels(self.value(x));
        let ng = self.needs(&[x]);
        self.push(out, Op::SoftmaxChannels { x }, ng)
    }

    pub fn srf_aggregate(&mut self, f: NodeId, w: NodeId) -> Result<NodeId> {
        let out = ops::srf_aggregate(self.value(f), self.value(w))?;
        let ng = self.needs(&[f, w]);
        Ok(self.push(out, Op::SrfAggregate { f, w }, ng))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let out = ops::global_avg_pool(self.value(x));
        let ng = self.needs(&[x]);
        self.push(out, Op::GlobalAvgPool { x }, ng)
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::linear(self.value(x), self.value(w), self.value(b))?;
        self.macs.linear += (self.shape(x).n * self.shape(w).numel()) as u64;
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    /// Mean softmax cross-entropy; a `1x1x1x1` node.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        let ng = self.needs(&[logits]);
        Ok(self.push(
            Tensor::full(Shape::new(1, 1, 1, 1), loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Mean squared difference; a `1x1x1x1` node.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let diff = self.value(a).sub(self.value(b))?;
        let loss = diff.sq_norm() / T::of(diff.len() as f64);
        let ng = self.needs(&[a, b]);
        Ok(self.push(
            Tensor::full(Shape::new(1, 1, 1, 1), loss),
            Op::Mse { a, b },
            ng,
        ))
    }

    pub fn crop(
        &mut self,
        x: NodeId,
        top: usize,
        left: usize,
        h: usize,
        w: usize,
    ) -> Result<NodeId> {
        let out = ops::crop(self.value(x), top, left, h, w)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::Crop { x, top, left }, ng))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).sum();
        let ng = self.needs(&[x]);
        self.push(
            Tensor::full(Shape::new(1, 1, 1, 1), total),
            Op::Sum { x },
            ng,
        )
    }

    /// Scope path of the first node holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().find(|n| !n.value.all_finite()).map(|n| {
            let op = n.op.name();
            if n.scope.is_empty() {
                op.to_string()
            } else {
                format!("{}/{op}", n.scope)
            }
        })
    }

    /// Gradient of the last backward pass with respect to a node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Backpropagates from the scalar node `loss`, accumulating gradients of
    /// trainable parameters into the store.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar, got {}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let contributions = self.node_backward(i, &gy)?;
            for (target, g) in contributions {
                if !self.nodes[target.0].needs_grad {
                    continue;
                }
                match &mut grads[target.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            if let Op::Param(pid) = self.nodes[i].op {
                self.store.value_mut(pid).accumulate_grad(gy.data());
            }
            grads[i] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, i: usize, gy: &Tensor<T>) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let needs = |id: NodeId| self.nodes[id.0].needs_grad;
        let node = &self.nodes[i];
        Ok(match &node.op {
            Op::Leaf | Op::Param(_) => Vec::new(),
            Op::Conv2d { x, w, spec } => {
                let (dx, dw) = ops::conv2d_backward(v(*x), v(*w), *spec, gy, needs(*x))?;
                let mut out = vec![(*w, dw)];
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                out
            }
            Op::BatchNorm {
                x,
                alpha,
                beta,
                cache,
            } => {
                let (dx, da, db) = ops::batchnorm2d_backward(gy, v(*alpha).data(), cache);
                vec![
                    (*x, dx),
                    (*alpha, Tensor::from_vec(v(*alpha).shape(), da)?),
                    (*beta, Tensor::from_vec(v(*beta).shape(), db)?),
                ]
            }
            Op::BatchNormFrozen {
                x,
                alpha,
                beta,
                mean,
                var,
                eps,
            } => {
                let (dx, da, db) =
                    ops::batchnorm2d_frozen_backward(v(*x), gy, v(*alpha).data(), mean, var, *eps);
                vec![
                    (*x, dx),
                    (*alpha, Tensor::from_vec(v(*alpha).shape(), da)?),
                    (*beta, Tensor::from_vec(v(*beta).shape(), db)?),
                ]
            }
            Op::LeakyRelu { x, slope } => vec![(*x, ops::leaky_relu_backward(v(*x), gy, *slope))],
            Op::Add { a, b } => vec![(*a, gy.clone()), (*b, gy.clone())],
            Op::Concat { a, b } => {
                let (ga, gb) = ops::split_channels(gy, v(*a).shape().c);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Channels { x, start } => {
                let xs = v(*x).shape();
                let len = gy.shape().c;
                let mut dx = Tensor::zeros(xs);
                for n in 0..xs.n {
                    let p = xs.plane();
                    dx.item_mut(n)[start * p..(start + len) * p].copy_from_slice(gy.item(n));
                }
                vec![(*x, dx)]
            }
            Op::ScaleBy { x, s } => {
                let k = v(*s).data()[0];
                let ds: T = v(*x)
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&a, &g)| a * g)
                    .sum();
                vec![(*x, gy.scale(k)), (*s, Tensor::full(v(*s).shape(), ds))]
            }
            Op::MulConst { x, c } => vec![(*x, gy.scale(*c))],
            Op::DetailApprox { x, g, h } => {
                vec![(
                    *x,
                    wavelet::detail_approx_backward(v(*x).shape(), g, h, gy)?,
                )]
            }
            Op::CsaAlign { ft, offsets, u } => {
                let (dft, doff, du) = ops::csa_align_backward(v(*ft), v(*offsets), v(*u), gy)?;
                vec![(*ft, dft), (*offsets, doff), (*u, du)]
            }
            Op::SoftmaxChannels { x } => {
                vec![(*x, ops::softmax_channels_backward(&node.value, gy))]
            }
            Op::SrfAggregate { f, w } => {
                let (df, dw) = ops::srf_aggregate_backward(v(*f), v(*w), gy)?;
                vec![(*f, df), (*w, dw)]
            }
            Op::GlobalAvgPool { x } => {
                vec![(*x, ops::global_avg_pool_backward(v(*x).shape(), gy))]
            }
            Op::Linear { x, w, b } => {
                let (dx, dw, db) = ops::linear_backward(v(*x), v(*w), gy);
                let db = db.reshape(v(*b).shape())?;
                vec![(*x, dx), (*w, dw), (*b, db)]
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                vec![(
                    *logits,
                    ops::softmax_cross_entropy_backward(probs, labels, gy.data()[0]),
                )]
            }
            Op::Mse { a, b } => {
                let diff = v(*a).sub(v(*b))?;
                let k = T::of(2.0) * gy.data()[0] / T::of(diff.len() as f64);
                let da = diff.scale(k);
                let db = da.scale(-T::one());
                vec![(*a, da), (*b, db)]
            }
            Op::Crop { x, top, left } => {
                vec![(*x, ops::crop_backward(v(*x).shape(), gy, *top, *left))]
            }
            Op::Sum { x } => vec![(*x, Tensor::full(v(*x).shape(), gy.data()[0]))],
        })
    }
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "input",
            Op::Param(_) => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm { .. } | Op::BatchNormFrozen { .. } => "batchnorm",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Add { .. } => "add",
            Op::Concat { .. } => "concat",
            Op::Channels { .. } => "channels",
            Op::ScaleBy { .. } => "scale",
            Op::MulConst { .. } => "mul_const",
            Op::DetailApprox { .. } => "dwt",
            Op::CsaAlign { .. } => "csa_align",
            Op::SoftmaxChannels { .. } => "softmax",
            Op::SrfAggregate { .. } => "srf_aggregate",
            Op::GlobalAvgPool { .. } => "avg_pool",
            Op::Linear { .. } => "linear",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Mse { .. } => "mse",
            Op::Crop { .. } => "crop",
            Op::Sum { .. } => "sum",
        }
    }
}
