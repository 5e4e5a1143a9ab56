//! Crossmodal rearranging fusion: cross-domain embedding (CE), crossmodal
//! spatial alignment (CSA) and semantic rearranging fusion (SRF).
//!
//! At a stage with RGB features `I_R` (`C_R` channels) and infrared
//! wavelet features `I_T`, the module computes
//!
//! ```text
//! F_T  = CE(I_T)                         embed width C_E
//! F_M  = conv3x3([I_R, F_T])             C_M = C_R channels
//! off  = conv3x3(F_M)                    N x 2 x H x W, (dy, dx)
//! F_AT = align(F_T, off, U)
//! W    = softmax_c(conv1x1(I_R))         k_r^2 channels
//! G_T  = aggregate(F_AT, W)
//! out  = [I_R, G_T]
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{conv_weight, zero_conv_weight, ConvBnAct};
use crate::tensor::ops::Conv2dSpec;
use crate::tensor::{Graph, NodeId, ParamId, ParamKind, ParamStore, Scalar, Shape, Tensor};

/// Side of the per-pixel rearranging window (`C_RK = 9`).
pub const SRF_WINDOW: usize = 3;
/// Side of the shifted-receptive-field aggregation weights `U`.
pub const ALIGN_WINDOW: usize = 3;
/// Embedding units per CE layer in the dual backbone.
pub const CE_UNITS: usize = 2;

fn same_grid<T: Scalar>(g: &Graph<'_, T>, a: NodeId, b: NodeId, what: &str) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::shape(format!(
            "{what}: modalities on different grids ({sa} vs {sb})"
        )));
    }
    Ok(())
}

/// Stack of 3x3 conv + batchnorm + leaky ReLU units at stride 1.
#[derive(Clone, Debug)]
pub struct CeLayer {
    pub units: Vec<ConvBnAct>,
    in_channels: usize,
    out_channels: usize,
}

impl CeLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        units: usize,
        rng: &mut R,
    ) -> Self {
        assert!(units >= 1, "CE layer needs at least one unit");
        let units = (0..units)
            .map(|i| {
                let c = if i == 0 { cin } else { cout };
                ConvBnAct::new(store, &format!("{name}.{i}"), c, cout, 3, 1, rng)
            })
            .collect();
        CeLayer {
            units,
            in_channels: cin,
            out_channels: cout,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, it: NodeId) -> Result<NodeId> {
        let c = g.shape(it).c;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "embedding expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let mut x = it;
        for unit in &self.units {
            x = unit.forward(g, x)?;
        }
        Ok(x)
    }
}

pub fn ce_forward<T: Scalar>(g: &mut Graph<'_, T>, it: NodeId, layer: &CeLayer) -> Result<NodeId> {
    layer.forward(g, it)
}

/// Offset prediction plus shifted-receptive-field resampling.
#[derive(Clone, Debug)]
pub struct CsaLayer {
    pub name: String,
    /// `C_M x (C_R + C_E) x 3 x 3`.
    pub fuse: ParamId,
    /// `2 x C_M x 3 x 3`, zero at construction so alignment starts at identity.
    pub offset: ParamId,
    /// `1 x 1 x K x K`, a centre delta at construction.
    pub u: ParamId,
}

impl CsaLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_r: usize,
        c_e: usize,
        c_m: usize,
        rng: &mut R,
    ) -> Self {
        let k = ALIGN_WINDOW;
        let u = Tensor::from_fn(Shape::new(1, 1, k, k), |_, _, y, x| {
            if y == k / 2 && x == k / 2 {
                T::one()
            } else {
                T::zero()
            }
        });
        CsaLayer {
            name: name.to_string(),
            fuse: conv_weight(store, format!("{name}.fuse"), c_m, c_r + c_e, 3, rng),
            offset: zero_conv_weight(store, format!("{name}.offset"), 2, c_m, 3),
            u: store.trainable(format!("{name}.u"), ParamKind::AlignWeight, u),
        }
    }

    /// `(F_M, offsets)`.
    pub fn predict_offsets<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ir: NodeId,
        ft: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        same_grid(g, ir, ft, "offset prediction")?;
        g.push_scope(self.name.clone());
        let out = (|| {
            let cat = g.concat(ir, ft)?;
            let wf = g.param(self.fuse);
            let fm = g.conv2d(cat, wf, Conv2dSpec::same(3))?;
            let wo = g.param(self.offset);
            let off = g.conv2d(fm, wo, Conv2dSpec::same(3))?;
            Ok((fm, off))
        })();
        g.pop_scope();
        out
    }

    pub fn align<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ft: NodeId,
        offsets: NodeId,
    ) -> Result<NodeId> {
        g.push_scope(self.name.clone());
        let u = g.param(self.u);
        let out = g.csa_align(ft, offsets, u);
        g.pop_scope();
        out
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ir: NodeId,
        ft: NodeId,
    ) -> Result<NodeId> {
        let (_, off) = self.predict_offsets(g, ir, ft)?;
        self.align(g, ft, off)
    }
}

pub fn csa_predict_offsets<T: Scalar>(
    g: &mut Graph<'_, T>,
    ir: NodeId,
    ft: NodeId,
    layer: &CsaLayer,
) -> Result<(NodeId, NodeId)> {
    layer.predict_offsets(g, ir, ft)
}

/// Graph-free shifted-receptive-field resampling.
pub fn csa_align<T: Scalar>(
    ft: &Tensor<T>,
    offsets: &Tensor<T>,
    u: &Tensor<T>,
) -> Result<Tensor<T>> {
    crate::tensor::ops::csa_align(ft, offsets, u)
}

/// Per-pixel softmax kernels generated from the RGB features.
#[derive(Clone, Debug)]
pub struct SrfLayer {
    pub name: String,
    /// `k_r^2 x C_R x 1 x 1`.
    pub compress: ParamId,
    pub window: usize,
}

impl SrfLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_r: usize,
        rng: &mut R,
    ) -> Self {
        let kr = SRF_WINDOW;
        SrfLayer {
            name: name.to_string(),
            compress: conv_weight(store, format!("{name}.compress"), kr * kr, c_r, 1, rng),
            window: kr,
        }
    }

    pub fn weights<T: Scalar>(&self, g: &mut Graph<'_, T>, ir: NodeId) -> Result<NodeId> {
        g.push_scope(self.name.clone());
        let out = (|| {
            let w = g.param(self.compress);
            let logits = g.conv2d(ir, w, Conv2dSpec::new(1, 0))?;
            Ok(g.softmax_channels(logits))
        })();
        g.pop_scope();
        out
    }

    pub fn aggregate<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        fat: NodeId,
        weights: NodeId,
    ) -> Result<NodeId> {
        g.push_scope(self.name.clone());
        let out = g.srf_aggregate(fat, weights);
        g.pop_scope();
        out
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ir: NodeId,
        fat: NodeId,
    ) -> Result<NodeId> {
        same_grid(g, ir, fat, "rearranging fusion")?;
        let w = self.weights(g, ir)?;
        self.aggregate(g, fat, w)
    }
}

pub fn srf_weights<T: Scalar>(
    g: &mut Graph<'_, T>,
    ir: NodeId,
    layer: &SrfLayer,
) -> Result<NodeId> {
    layer.weights(g, ir)
}

/// Graph-free per-pixel aggregation.
pub fn srf_aggregate<T: Scalar>(fat: &Tensor<T>, weights: &Tensor<T>) -> Result<Tensor<T>> {
    crate::tensor::ops::srf_aggregate(fat, weights)
}

#[derive(Clone, Debug)]
pub struct Cmrf {
    pub ce: CeLayer,
    pub csa: CsaLayer,
    pub srf: SrfLayer,
}

impl Cmrf {
    /// `c_t` is the channel count of `I_T`, `c_e` the embed width.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_r: usize,
        c_t: usize,
        c_e: usize,
        rng: &mut R,
    ) -> Self {
        Cmrf {
            ce: CeLayer::new(store, &format!("{name}.ce"), c_t, c_e, CE_UNITS, rng),
            csa: CsaLayer::new(store, &format!("{name}.csa"), c_r, c_e, c_r, rng),
            srf: SrfLayer::new(store, &format!("{name}.srf"), c_r, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ir: NodeId,
        it: NodeId,
    ) -> Result<NodeId> {
        same_grid(g, ir, it, "fusion")?;
        let ft = self.ce.forward(g, it)?;
        let fat = self.csa.forward(g, ir, ft)?;
        let gt = self.srf.forward(g, ir, fat)?;
        g.concat(ir, gt)
    }
}

pub fn cmrf_forward<T: Scalar>(
    g: &mut Graph<'_, T>,
    ir: NodeId,
    it: NodeId,
    layers: &Cmrf,
) -> Result<NodeId> {
    layers.forward(g, ir, it)
}

/// How the infrared features join the RGB stream at a dual-stream stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionKind {
    /// CE, CSA and SRF.
    Cmrf,
    /// SRF applied directly to the wavelet features, no embedding or alignment.
    SrfOnly,
    /// Plain concatenation of the embedded infrared features.
    MidCat,
}

impl FusionKind {
    pub const ALL: [FusionKind; 3] = [FusionKind::Cmrf, FusionKind::SrfOnly, FusionKind::MidCat];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionKind::Cmrf => "cmrf",
            FusionKind::SrfOnly => "srf-only",
            FusionKind::MidCat => "mid-cat",
        }
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown fusion `{s}` (cmrf, srf-only, mid-cat)")))
    }
}

#[derive(Clone, Debug)]
pub enum Fusion {
    Cmrf(Cmrf),
    SrfOnly(SrfLayer),
    MidCat(CeLayer),
}

impl Fusion {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        kind: FusionKind,
        store: &mut ParamStore<T>,
        name: &str,
        c_r: usize,
        c_t: usize,
        c_e: usize,
        rng: &mut R,
    ) -> Self {
        match kind {
            FusionKind::Cmrf => Fusion::Cmrf(Cmrf::new(store, name, c_r, c_t, c_e, rng)),
            FusionKind::SrfOnly => {
                Fusion::SrfOnly(SrfLayer::new(store, &format!("{name}.srf"), c_r, rng))
            }
            FusionKind::MidCat => Fusion::MidCat(CeLayer::new(
                store,
                &format!("{name}.ce"),
                c_t,
                c_e,
                CE_UNITS,
                rng,
            )),
        }
    }

    /// Channels of the fused output.
    pub fn out_channels(kind: FusionKind, c_r: usize, c_t: usize, c_e: usize) -> usize {
        match kind {
            FusionKind::Cmrf | FusionKind::MidCat => c_r + c_e,
            FusionKind::SrfOnly => c_r + c_t,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ir: NodeId,
        it: NodeId,
    ) -> Result<NodeId> {
        match self {
            Fusion::Cmrf(m) => m.forward(g, ir, it),
            Fusion::SrfOnly(srf) => {
                let gt = srf.forward(g, ir, it)?;
                g.concat(ir, gt)
            }
            Fusion::MidCat(ce) => {
                same_grid(g, ir, it, "fusion")?;
                let ft = ce.forward(g, it)?;
                g.concat(ir, ft)
            }
        }
    }
}
