use rand::Rng;

use crate::cmrf::{Fusion, FusionKind};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar};
use crate::wavelet::{AdwtLayer, WaveletKernel};

use super::stage::CnnStage;
use super::{BackboneConfig, DUAL_STAGES, NUM_STAGES};

/// RGB CNN branch and infrared ADWT branch over stages 1-3, fused per stage,
/// followed by two shared CNN stages.
#[derive(Clone, Debug)]
pub struct DualBackbone {
    pub cfg: BackboneConfig,
    pub fusion_kind: FusionKind,
    pub rgb: Vec<CnnStage>,
    pub ir: Vec<AdwtLayer>,
    pub fusion: Vec<Fusion>,
    pub shared: Vec<CnnStage>,
}

/// Intermediate and final features of one dual forward pass.
#[derive(Clone, Debug)]
pub struct DualFeatures {
    /// Fused output of stages 1-3.
    pub fused: Vec<NodeId>,
    /// `I_T` of stages 1-3.
    pub wavelet: Vec<NodeId>,
    /// Unscaled approximation passed down the infrared branch.
    pub approx: Vec<NodeId>,
    pub stage4: NodeId,
    pub stage5: NodeId,
}

pub fn build_dual_backbone<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    cfg: &BackboneConfig,
    rng: &mut R,
) -> Result<DualBackbone> {
    DualBackbone::new(store, cfg, FusionKind::Cmrf, rng)
}

impl DualBackbone {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &BackboneConfig,
        fusion_kind: FusionKind,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let haar = WaveletKernel::haar();
        let (mut rgb, mut ir, mut fusion, mut shared) = (vec![], vec![], vec![], vec![]);
        let mut c_in = cfg.in_channels;
        for j in 1..=DUAL_STAGES {
            let (c_r, c_e) = (cfg.rgb_channels(j), cfg.embed_channels(j));
            let c_t = 2 * cfg.ir_channels;
            rgb.push(CnnStage::new(
                store,
                &format!("stage{j}.rgb"),
                c_in,
                c_r,
                cfg.blocks(j),
                3,
                rng,
            ));
            ir.push(AdwtLayer::new(store, &format!("stage{j}.ir"), &haar));
            fusion.push(Fusion::new(
                fusion_kind,
                store,
                &format!("stage{j}.fusion"),
                c_r,
                c_t,
                c_e,
                rng,
            ));
            c_in = Fusion::out_channels(fusion_kind, c_r, c_t, c_e);
        }
        for j in DUAL_STAGES + 1..=NUM_STAGES {
            let c = cfg.rgb_channels(j);
            shared.push(CnnStage::new(
                store,
                &format!("stage{j}"),
                c_in,
                c,
                cfg.blocks(j),
                3,
                rng,
            ));
            c_in = c;
        }
        Ok(DualBackbone {
            cfg: cfg.clone(),
            fusion_kind,
            rgb,
            ir,
            fusion,
            shared,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.cfg.rgb_channels(NUM_STAGES)
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        rgb: NodeId,
        ir: NodeId,
    ) -> Result<DualFeatures> {
        let (rs, is) = (g.shape(rgb), g.shape(ir));
        if rs.c != self.cfg.in_channels || is.c != self.cfg.ir_channels {
            return Err(Error::shape(format!(
                "expected {}-channel RGB and {}-channel infrared, got {rs} and {is}",
                self.cfg.in_channels, self.cfg.ir_channels
            )));
        }
        if rs.n != is.n || rs.h != is.h || rs.w != is.w {
            return Err(Error::shape(format!(
                "modalities differ in size: {rs} vs {is}"
            )));
        }
        let div = 1 << NUM_STAGES;
        if rs.h % div != 0 || rs.w % div != 0 {
            return Err(Error::shape(format!(
                "input {}x{} is not divisible by {div}",
                rs.h, rs.w
            )));
        }
        let (mut fused, mut wavelet, mut approx) = (vec![], vec![], vec![]);
        let (mut x, mut a) = (rgb, ir);
        for j in 0..DUAL_STAGES {
            let ir_r = self.rgb[j].forward(g, x)?;
            g.push_scope(format!("stage{}.ir", j + 1));
            let r = self.ir[j].forward(g, a);
            g.pop_scope();
            let (it, next) = r?;
            x = self.fusion[j].forward(g, ir_r, it)?;
            a = next;
            fused.push(x);
            wavelet.push(it);
            approx.push(a);
        }
        let stage4 = self.shared[0].forward(g, x)?;
        let stage5 = self.shared[1].forward(g, stage4)?;
        Ok(DualFeatures {
            fused,
            wavelet,
            approx,
            stage4,
            stage5,
        })
    }
}

pub fn forward_dual<T: Scalar>(
    g: &mut Graph<'_, T>,
    model: &DualBackbone,
    rgb: NodeId,
    ir: NodeId,
) -> Result<(NodeId, NodeId)> {
    let f = model.forward(g, rgb, ir)?;
    Ok((f.stage4, f.stage5))
}

/// Dual backbone with a pooled linear head on the stage-5 features.
#[derive(Clone, Debug)]
pub struct DualClassifier {
    pub backbone: DualBackbone,
    pub head: Linear,
}

impl DualClassifier {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &BackboneConfig,
        fusion: FusionKind,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let backbone = DualBackbone::new(store, cfg, fusion, rng)?;
        let head = Linear::new(store, "head", backbone.out_channels(), num_classes, rng);
        Ok(DualClassifier { backbone, head })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        rgb: NodeId,
        ir: NodeId,
    ) -> Result<NodeId> {
        let f = self.backbone.forward(g, rgb, ir)?;
        let pooled = g.global_avg_pool(f.stage5);
        self.head.forward(g, pooled)
    }
}
