use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Shape, Tensor};

use super::stage::Stage;
use super::{BackboneConfig, StageKind, NUM_STAGES};

/// Single-stream classifier: five stages, global average pooling and a
/// linear head.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub cfg: BackboneConfig,
    pub kinds: [StageKind; NUM_STAGES],
    pub stages: Vec<Stage>,
    pub head: Linear,
}

pub fn build_cls_variant<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    cfg: &BackboneConfig,
    swaps: &[StageKind],
    num_classes: usize,
    rng: &mut R,
) -> Result<Classifier> {
    cfg.validate()?;
    StageKind::validate(swaps)?;
    if num_classes < 2 {
        return Err(Error::config(format!(
            "need at least two classes, got {num_classes}"
        )));
    }
    let mut kinds = [StageKind::Cnn; NUM_STAGES];
    kinds.copy_from_slice(swaps);
    let mut c_in = cfg.in_channels;
    let mut stages = Vec::with_capacity(NUM_STAGES);
    for (i, &kind) in kinds.iter().enumerate() {
        let j = i + 1;
        let c = cfg.rgb_channels(j);
        stages.push(Stage::new(
            kind,
            store,
            &format!("stage{j}"),
            c_in,
            c,
            cfg.blocks(j),
            rng,
        ));
        c_in = c;
    }
    let head = Linear::new(store, "head", c_in, num_classes, rng);
    Ok(Classifier {
        cfg: cfg.clone(),
        kinds,
        stages,
        head,
    })
}

impl Classifier {
    pub fn swap_depth(&self) -> usize {
        self.kinds
            .iter()
            .take_while(|k| **k == StageKind::Adwt)
            .count()
    }

    pub fn features<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let s = g.shape(x);
        if s.c != self.cfg.in_channels {
            return Err(Error::shape(format!(
                "classifier expects {} input channels, got {s}",
                self.cfg.in_channels
            )));
        }
        let div = 1 << NUM_STAGES;
        if !s.h.is_multiple_of(div) || !s.w.is_multiple_of(div) {
            return Err(Error::shape(format!(
                "input {}x{} is not divisible by {div}; pad it first",
                s.h, s.w
            )));
        }
        let mut y = x;
        for st in &self.stages {
            y = st.forward(g, y)?;
        }
        Ok(y)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let f = self.features(g, x)?;
        let pooled = g.global_avg_pool(f);
        self.head.forward(g, pooled)
    }
}

/// Zero-pads each plane symmetrically about its centre up to `h x w`.
pub fn pad_to<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h > h || s.w > w {
        return Err(Error::shape(format!("cannot pad {s} down to {h}x{w}")));
    }
    let (top, left) = ((h - s.h) / 2, (w - s.w) / 2);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for r in 0..s.h {
                dst[(top + r) * w + left..(top + r) * w + left + s.w]
                    .copy_from_slice(&src[r * s.w..(r + 1) * s.w]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Mode, ParamKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(depth: usize) -> (ParamStore<f32>, Classifier) {
        let mut store = ParamStore::new();
        let cfg = BackboneConfig::classification();
        let m = build_cls_variant(
            &mut store,
            &cfg,
            &StageKind::prefix(depth).unwrap(),
            10,
            &mut ChaCha8Rng::seed_from_u64(depth as u64),
        )
        .unwrap();
        (store, m)
    }

    #[test]
    fn logits_for_padded_digits() {
        let (mut store, m) = build(0);
        let x = Tensor::<f32>::full(Shape::new(3, 1, 28, 28), 0.5);
        let padded = pad_to(&x, 32, 32).unwrap();
        assert_eq!(padded.at(0, 0, 1, 1), 0.0);
        assert_eq!(padded.at(0, 0, 2, 2), 0.5);
        assert_eq!(padded.sum(), x.sum());
        let mut g = Graph::new(&mut store, Mode::Eval);
        let xi = g.input(padded);
        let y = m.forward(&mut g, xi).unwrap();
        assert_eq!(g.shape(y), Shape::new(3, 10, 1, 1));
        let raw = g.input(x);
        assert!(m.forward(&mut g, raw).is_err());
    }

    #[test]
    fn params_fall_with_swap_depth() {
        let counts: Vec<usize> = (0..=5)
            .map(|d| {
                build(d)
                    .0
                    .count(&[ParamKind::ConvWeight, ParamKind::WaveletFilter])
            })
            .collect();
        for w in counts.windows(2) {
            assert!(w[0] > w[1], "{counts:?}");
        }
    }

    #[test]
    fn invalid_swaps_rejected() {
        use StageKind::*;
        let mut store = ParamStore::<f32>::new();
        let cfg = BackboneConfig::classification();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(
            build_cls_variant(&mut store, &cfg, &[Cnn, Adwt, Cnn, Cnn, Cnn], 10, &mut rng).is_err()
        );
        assert!(build_cls_variant(&mut store, &cfg, &[Cnn; 4], 10, &mut rng).is_err());
    }
}
