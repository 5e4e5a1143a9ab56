//! Parameterised building blocks shared by the fusion module and backbones.

use rand::Rng;

use crate::error::Result;
use crate::tensor::ops::Conv2dSpec;
use crate::tensor::{Graph, NodeId, ParamId, ParamKind, ParamStore, Scalar, Shape, Tensor};

pub const LRELU_SLOPE: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// He-normal `cout x cin x k x k` convolution kernel.
pub fn conv_weight<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: String,
    cout: usize,
    cin: usize,
    k: usize,
    rng: &mut R,
) -> ParamId {
    let std = (2.0 / (cin * k * k) as f64).sqrt();
    store.trainable(
        name,
        ParamKind::ConvWeight,
        Tensor::randn(Shape::new(cout, cin, k, k), std, rng),
    )
}

pub fn zero_conv_weight<T: Scalar>(
    store: &mut ParamStore<T>,
    name: String,
    cout: usize,
    cin: usize,
    k: usize,
) -> ParamId {
    store.trainable(
        name,
        ParamKind::ConvWeight,
        Tensor::zeros(Shape::new(cout, cin, k, k)),
    )
}

/// Convolution (no bias), batchnorm and optional leaky ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub name: String,
    pub weight: ParamId,
    pub alpha: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub spec: Conv2dSpec,
    pub activate: bool,
}

impl ConvBnAct {
    /// `k x k` convolution with "same" padding at the given stride.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let weight = conv_weight(store, format!("{name}.conv"), cout, cin, k, rng);
        let ch = Shape::new(1, cout, 1, 1);
        ConvBnAct {
            name: name.to_string(),
            weight,
            alpha: store.trainable(
                format!("{name}.bn.alpha"),
                ParamKind::Affine,
                Tensor::full(ch, T::one()),
            ),
            beta: store.trainable(
                format!("{name}.bn.beta"),
                ParamKind::Affine,
                Tensor::zeros(ch),
            ),
            running_mean: store.fixed(
                format!("{name}.bn.mean"),
                ParamKind::RunningStat,
                Tensor::zeros(ch),
            ),
            running_var: store.fixed(
                format!("{name}.bn.var"),
                ParamKind::RunningStat,
                Tensor::full(ch, T::one()),
            ),
            spec: Conv2dSpec::new(stride, (k - 1) / 2),
            activate: true,
        }
    }

    pub fn out_channels<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.weight).shape().n
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        g.push_scope(self.name.clone());
        let out = self.forward_inner(g, x);
        g.pop_scope();
        out
    }

    fn forward_inner<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let y = g.conv2d(x, w, self.spec)?;
        let a = g.param(self.alpha);
        let b = g.param(self.beta);
        let y = g.batchnorm(
            y,
            a,
            b,
            (self.running_mean, self.running_var),
            T::of(BN_EPS),
        )?;
        Ok(if self.activate {
            g.leaky_relu(y, T::of(LRELU_SLOPE))
        } else {
            y
        })
    }
}

/// Fully connected classifier over `N x C x 1 x 1` features.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (cin as f64).sqrt();
        Linear {
            weight: store.trainable(
                format!("{name}.weight"),
                ParamKind::LinearWeight,
                Tensor::uniform(Shape::new(cout, cin, 1, 1), -bound, bound, rng),
            ),
            bias: store.trainable(
                format!("{name}.bias"),
                ParamKind::LinearBias,
                Tensor::zeros(Shape::new(1, cout, 1, 1)),
            ),
            out_features: cout,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, b)
    }
}
