use rand::Rng;

use crate::cmrf::CeLayer;
use crate::error::Result;
use crate::layers::ConvBnAct;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar};
use crate::wavelet::{AdwtLayer, WaveletKernel};

use super::StageKind;

/// `K x K` unit followed by a `1 x 1` unit, added back onto the input.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub spatial: ConvBnAct,
    pub pointwise: ConvBnAct,
}

impl ResidualBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        ResidualBlock {
            spatial: ConvBnAct::new(store, &format!("{name}.conv{k}"), c, c, k, 1, rng),
            pointwise: ConvBnAct::new(store, &format!("{name}.conv1"), c, c, 1, 1, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let y = self.spatial.forward(g, x)?;
        let y = self.pointwise.forward(g, y)?;
        g.add(x, y)
    }
}

/// Stride-2 `K x K` downsampling unit followed by `N` residual blocks.
#[derive(Clone, Debug)]
pub struct CnnStage {
    pub down: ConvBnAct,
    pub blocks: Vec<ResidualBlock>,
}

impl CnnStage {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        blocks: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let down = ConvBnAct::new(store, &format!("{name}.down"), cin, cout, k, 2, rng);
        let blocks = (0..blocks)
            .map(|i| ResidualBlock::new(store, &format!("{name}.block{i}"), cout, k, rng))
            .collect();
        CnnStage { down, blocks }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let mut y = self.down.forward(g, x)?;
        for b in &self.blocks {
            y = b.forward(g, y)?;
        }
        Ok(y)
    }
}

/// Wavelet downsampling followed by a one-unit embedding of `I_T`; the
/// embedded features feed the next stage.
#[derive(Clone, Debug)]
pub struct AdwtStage {
    pub name: String,
    pub adwt: AdwtLayer,
    pub ce: CeLayer,
}

impl AdwtStage {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: &WaveletKernel,
        rng: &mut R,
    ) -> Self {
        AdwtStage {
            name: name.to_string(),
            adwt: AdwtLayer::new(store, &format!("{name}.adwt"), kernel),
            ce: CeLayer::new(store, &format!("{name}.ce"), 2 * cin, cout, 1, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        g.push_scope(format!("{}.adwt", self.name));
        let r = self.adwt.forward(g, x);
        g.pop_scope();
        let (it, _) = r?;
        self.ce.forward(g, it)
    }
}

#[derive(Clone, Debug)]
pub enum Stage {
    Cnn(CnnStage),
    Adwt(AdwtStage),
}

impl Stage {
    /// Stage with kernel size 3 (Haar wavelet for ADWT).
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        kind: StageKind,
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        blocks: usize,
        rng: &mut R,
    ) -> Self {
        match kind {
            StageKind::Cnn => Stage::Cnn(CnnStage::new(store, name, cin, cout, blocks, 3, rng)),
            StageKind::Adwt => Stage::Adwt(AdwtStage::new(
                store,
                name,
                cin,
                cout,
                &WaveletKernel::haar(),
                rng,
            )),
        }
    }

    pub fn kind(&self) -> StageKind {
        match self {
            Stage::Cnn(_) => StageKind::Cnn,
            Stage::Adwt(_) => StageKind::Adwt,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        match self {
            Stage::Cnn(s) => s.forward(g, x),
            Stage::Adwt(s) => s.forward(g, x),
        }
    }
}
