//! Closed-form parameter and FLOP counts for CNN and ADWT stages, and an
//! instrumented counter to check them against.
//!
//! One FLOP unit is one multiply-accumulate. Convolutions are charged
//! `C_in * K * K` per output element (padded taps included), the wavelet
//! pair `3 K_w` lifting units per output pixel and input channel, the
//! linear head `C * P`. Batchnorm, activations, biases and additions are
//! free. With `out = H W / 4^(j+1)` and `in = H W / 4^j` pixels:
//!
//! ```text
//! CNN   fwd  out * (K^2 C C' + N (K^2 + 1) C'^2)
//!       par  K^2 C C' + N (K^2 + 1) C'^2
//!       bwd  in * C' K^2 (N C' + C)
//! ADWT  fwd  out * C (3 K_w + 2 K^2 C')
//!       par  2 K^2 C C' + 2 K_w
//!       bwd  in * K^2 C C'
//! ```
//!
//! For the Haar filter `K_w = 2`; setting `K_w = K` gives the textbook form
//! `out * K C (3 + 2 K C')`.

use std::fmt::Write as _;

use rand::Rng;

use crate::backbone::{
    AdwtStage, BackboneConfig, Classifier, CnnStage, Stage, StageKind, NUM_STAGES,
};
use crate::error::{Error, Result};
use crate::tensor::{Graph, MacCount, Mode, NodeId, ParamKind, ParamStore, Scalar, Shape, Tensor};
use crate::wavelet::WaveletKernel;

/// Geometry of one stage. `j` is zero-based: the stage reads a
/// `ceil(H / 2^j)` map and writes a `ceil(H / 2^(j+1))` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageSpec {
    pub h: usize,
    pub w: usize,
    pub j: usize,
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub wavelet_len: usize,
}

impl StageSpec {
    pub fn new(h: usize, w: usize, j: usize, c_in: usize, c_out: usize, n: usize) -> Self {
        StageSpec {
            h,
            w,
            j,
            k: 3,
            c_in,
            c_out,
            n,
            wavelet_len: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.h,
            self.w,
            self.k,
            self.c_in,
            self.c_out,
            self.wavelet_len,
        ]
        .contains(&0)
        {
            return Err(Error::config(format!(
                "stage spec has a zero field: {self:?}"
            )));
        }
        if self.k.is_multiple_of(2) {
            return Err(Error::config(format!(
                "kernel size must be odd, got {}",
                self.k
            )));
        }
        Ok(())
    }

    fn halve(v: usize, times: usize) -> usize {
        (0..times).fold(v, |a, _| a.div_ceil(2))
    }

    pub fn input_hw(&self) -> (usize, usize) {
        (Self::halve(self.h, self.j), Self::halve(self.w, self.j))
    }

    pub fn output_hw(&self) -> (usize, usize) {
        (
            Self::halve(self.h, self.j + 1),
            Self::halve(self.w, self.j + 1),
        )
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        let (h, w) = self.input_hw();
        Shape::new(batch, self.c_in, h, w)
    }

    fn pixels_in(&self) -> u64 {
        let (h, w) = self.input_hw();
        (h * w) as u64
    }

    fn pixels_out(&self) -> u64 {
        let (h, w) = self.output_hw();
        (h * w) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    Cnn,
    Adwt,
    Head,
}

impl CostKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Cnn => "cnn",
            CostKind::Adwt => "adwt",
            CostKind::Head => "head",
        }
    }
}

impl From<StageKind> for CostKind {
    fn from(k: StageKind) -> Self {
        match k {
            StageKind::Cnn => CostKind::Cnn,
            StageKind::Adwt => CostKind::Adwt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub kind: CostKind,
    pub params: u64,
    pub flops_forward: u64,
    pub flops_backward: u64,
}

pub fn cnn_stage_cost(s: &StageSpec) -> ComplexityReport {
    let (k2, c, cp, n) = (
        (s.k * s.k) as u64,
        s.c_in as u64,
        s.c_out as u64,
        s.n as u64,
    );
    let per_out = k2 * c * cp + n * (k2 + 1) * cp * cp;
    ComplexityReport {
        kind: CostKind::Cnn,
        params: per_out,
        flops_forward: s.pixels_out() * per_out,
        flops_backward: s.pixels_in() * cp * k2 * (n * cp + c),
    }
}

pub fn adwt_stage_cost(s: &StageSpec) -> ComplexityReport {
    let (k2, kw, c, cp) = (
        (s.k * s.k) as u64,
        s.wavelet_len as u64,
        s.c_in as u64,
        s.c_out as u64,
    );
    ComplexityReport {
        kind: CostKind::Adwt,
        params: 2 * k2 * c * cp + 2 * kw,
        flops_forward: s.pixels_out() * c * (3 * kw + 2 * k2 * cp),
        flops_backward: s.pixels_in() * k2 * c * cp,
    }
}

pub fn stage_cost(s: &StageSpec, kind: StageKind) -> ComplexityReport {
    match kind {
        StageKind::Cnn => cnn_stage_cost(s),
        StageKind::Adwt => adwt_stage_cost(s),
    }
}

/// Costs of a pooled linear head over `c` features and `classes` outputs.
pub fn head_cost(c: usize, classes: usize) -> ComplexityReport {
    let cp = (c * classes) as u64;
    ComplexityReport {
        kind: CostKind::Head,
        params: cp,
        flops_forward: cp,
        flops_backward: cp,
    }
}

/// Per-stage rows plus the head of a single-stream classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCost {
    pub rows: Vec<(String, ComplexityReport)>,
}

impl ModelCost {
    pub fn total(&self) -> ComplexityReport {
        self.rows.iter().fold(
            ComplexityReport {
                kind: CostKind::Head,
                params: 0,
                flops_forward: 0,
                flops_backward: 0,
            },
            |a, (_, r)| ComplexityReport {
                params: a.params + r.params,
                flops_forward: a.flops_forward + r.flops_forward,
                flops_backward: a.flops_backward + r.flops_backward,
                ..a
            },
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,kind,params,flops_fwd,flops_bwd\n");
        let t = self.total();
        for (name, r) in self
            .rows
            .iter()
            .map(|(n, r)| (n.as_str(), r))
            .chain([("total", &t)])
        {
            let kind = if name == "total" {
                "all"
            } else {
                r.kind.as_str()
            };
            writeln!(
                out,
                "{name},{kind},{},{},{}",
                r.params, r.flops_forward, r.flops_backward
            )
            .unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:<5} {:>12} {:>16} {:>16}\n",
            "stage", "kind", "params", "fwd MACs", "bwd MACs"
        );
        let t = self.total();
        for (name, r) in &self.rows {
            writeln!(
                out,
                "{:<8} {:<5} {:>12} {:>16} {:>16}",
                name,
                r.kind.as_str(),
                r.params,
                r.flops_forward,
                r.flops_backward
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<8} {:<5} {:>12} {:>16} {:>16}",
            "total", "", t.params, t.flops_forward, t.flops_backward
        )
        .unwrap();
        out
    }
}

/// Stage specs of a single-stream classifier built from `cfg`.
pub fn stage_specs(cfg: &BackboneConfig) -> Vec<StageSpec> {
    let mut c_in = cfg.in_channels;
    (1..=NUM_STAGES)
        .map(|j| {
            let c = cfg.rgb_channels(j);
            let s = StageSpec::new(cfg.height, cfg.width, j - 1, c_in, c, cfg.blocks(j));
            c_in = c;
            s
        })
        .collect()
}

pub fn model_cost(
    cfg: &BackboneConfig,
    swaps: &[StageKind],
    num_classes: usize,
) -> Result<ModelCost> {
    cfg.validate()?;
    StageKind::validate(swaps)?;
    let specs = stage_specs(cfg);
    let mut rows: Vec<(String, ComplexityReport)> = specs
        .iter()
        .zip(swaps)
        .enumerate()
        .map(|(i, (s, &kind))| (format!("stage{}", i + 1), stage_cost(s, kind)))
        .collect();
    rows.push((
        "head".into(),
        head_cost(cfg.rgb_channels(NUM_STAGES), num_classes),
    ));
    Ok(ModelCost { rows })
}

/// Builds the stage a spec describes, with a Haar wavelet for ADWT stages.
pub fn build_stage<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    spec: &StageSpec,
    kind: StageKind,
    rng: &mut R,
) -> Result<Stage> {
    spec.validate()?;
    match kind {
        StageKind::Cnn => Ok(Stage::Cnn(CnnStage::new(
            store, "stage", spec.c_in, spec.c_out, spec.n, spec.k, rng,
        ))),
        StageKind::Adwt => {
            if spec.k != 3 || spec.wavelet_len != 2 {
                return Err(Error::config(
                    "ADWT stages are built with 3x3 embedding and the Haar wavelet",
                ));
            }
            Ok(Stage::Adwt(AdwtStage::new(
                store,
                "stage",
                spec.c_in,
                spec.c_out,
                &WaveletKernel::haar(),
                rng,
            )))
        }
    }
}

/// Parameters the analytic model counts: convolution kernels, wavelet
/// filters and linear weights.
pub fn counted_params<T: Scalar>(store: &ParamStore<T>) -> u64 {
    store.count(&[
        ParamKind::ConvWeight,
        ParamKind::WaveletFilter,
        ParamKind::LinearWeight,
    ]) as u64
}

/// MACs executed by one evaluation-mode forward pass of `f` on a zero input
/// of the given shape.
pub fn measured_macs<T, F>(store: &mut ParamStore<T>, input: Shape, f: F) -> Result<MacCount>
where
    T: Scalar,
    F: FnOnce(&mut Graph<'_, T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new(store, Mode::Eval);
    let x = g.input(Tensor::zeros(input));
    f(&mut g, x)?;
    Ok(g.macs())
}

pub fn measured_stage_macs<T: Scalar>(
    store: &mut ParamStore<T>,
    stage: &Stage,
    spec: &StageSpec,
) -> Result<u64> {
    Ok(measured_macs(store, spec.input_shape(1), |g, x| stage.forward(g, x))?.total())
}

pub fn measured_model_macs<T: Scalar>(
    store: &mut ParamStore<T>,
    model: &Classifier,
) -> Result<u64> {
    let cfg = &model.cfg;
    let shape = Shape::new(1, cfg.in_channels, cfg.height, cfg.width);
    Ok(measured_macs(store, shape, |g, x| model.forward(g, x))?.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::build_cls_variant;
    use crate::layers::ConvBnAct;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_cnn_is_the_downsampling_conv() {
        let s = StageSpec::new(32, 32, 1, 4, 8, 0);
        let r = cnn_stage_cost(&s);
        assert_eq!(r.flops_forward, (32 * 32 / 16) * 9 * 4 * 8);
        assert_eq!(r.params, 9 * 4 * 8);
    }

    #[test]
    fn adwt_decomposes_into_filter_bank_and_embedding() {
        let s = StageSpec {
            wavelet_len: 3,
            ..StageSpec::new(16, 16, 0, 5, 7, 1)
        };
        let r = adwt_stage_cost(&s);
        let out = 64;
        assert_eq!(r.flops_forward, out * 3 * 3 * 5 + out * 2 * 9 * 5 * 7);
        // K_w = K reproduces out * K C (3 + 2 K C')
        assert_eq!(r.flops_forward, out * 3 * 5 * (3 + 2 * 3 * 7));
    }

    #[test]
    fn backward_ratio_identity() {
        for (c, cp, n) in [(2, 4, 1), (8, 8, 2), (16, 3, 1)] {
            let s = StageSpec::new(32, 32, 1, c, cp, n);
            let (a, b) = (
                adwt_stage_cost(&s).flops_backward,
                cnn_stage_cost(&s).flops_backward,
            );
            assert_eq!(a * (n * cp + c) as u64, b * c as u64);
        }
    }

    #[test]
    fn parameter_dominance_needs_channel_growth() {
        // equal widths tie at C = 2: 2*9*4 + 4 == 9*4 + 10*4
        let flat = StageSpec::new(16, 16, 0, 2, 2, 1);
        assert_eq!(adwt_stage_cost(&flat).params, cnn_stage_cost(&flat).params);
        for c in [2, 4, 8, 16] {
            for n in [1, 2] {
                let s = StageSpec::new(16, 16, 0, c, 2 * c, n);
                assert!(adwt_stage_cost(&s).params < cnn_stage_cost(&s).params);
            }
        }
    }

    #[test]
    fn single_pointwise_conv_closed_form() {
        let mut store = ParamStore::<f32>::new();
        let mut unit = ConvBnAct::new(
            &mut store,
            "p",
            2,
            3,
            1,
            1,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        unit.activate = false;
        let m = measured_macs(&mut store, Shape::new(1, 2, 4, 4), |g, x| {
            unit.forward(g, x)
        })
        .unwrap();
        assert_eq!(m.conv, 96);
        assert_eq!(m.total(), 96);
    }

    #[test]
    fn haar_pass_hand_count() {
        // 1x1x4x4: horizontal 2 filters x 4 rows x 2 outputs x 2 taps = 32,
        // vertical 2 filters x 2 x 2 outputs x 2 taps = 16; 48 taps = 24 units
        let mut store = ParamStore::<f32>::new();
        let layer = crate::wavelet::AdwtLayer::new(&mut store, "w", &WaveletKernel::haar());
        let m = measured_macs(&mut store, Shape::new(1, 1, 4, 4), |g, x| {
            Ok(layer.forward(g, x)?.0)
        })
        .unwrap();
        assert_eq!(m.dwt, 24);
        assert_eq!(m.conv, 0);
    }

    #[test]
    fn built_stages_match_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [StageKind::Cnn, StageKind::Adwt] {
            for (h, c, cp, n, j) in [(16, 2, 4, 1, 0), (32, 4, 8, 2, 1), (8, 3, 3, 1, 0)] {
                let spec = StageSpec::new(h, h, j, c, cp, n);
                let mut store = ParamStore::<f32>::new();
                let stage = build_stage(&mut store, &spec, kind, &mut rng).unwrap();
                let r = stage_cost(&spec, kind);
                assert_eq!(counted_params(&store), r.params, "{kind} {spec:?}");
                assert_eq!(
                    measured_stage_macs(&mut store, &stage, &spec).unwrap(),
                    r.flops_forward,
                    "{kind} {spec:?}"
                );
            }
        }
    }

    #[test]
    fn whole_classifier_matches_model_cost() {
        let cfg = BackboneConfig::classification();
        for depth in [0, 3, 5] {
            let swaps = StageKind::prefix(depth).unwrap();
            let mut store = ParamStore::<f32>::new();
            let m = build_cls_variant(
                &mut store,
                &cfg,
                &swaps,
                10,
                &mut ChaCha8Rng::seed_from_u64(2),
            )
            .unwrap();
            let cost = model_cost(&cfg, &swaps, 10).unwrap().total();
            assert_eq!(counted_params(&store), cost.params);
            assert_eq!(
                measured_model_macs(&mut store, &m).unwrap(),
                cost.flops_forward
            );
        }
    }

    #[test]
    fn csv_schema() {
        let cfg = BackboneConfig::classification();
        let csv = model_cost(&cfg, &StageKind::prefix(2).unwrap(), 10)
            .unwrap()
            .to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "stage,kind,params,flops_fwd,flops_bwd");
        assert!(lines[1].starts_with("stage1,adwt,"));
        assert!(lines[3].starts_with("stage3,cnn,"));
        assert!(lines[6].starts_with("head,head,"));
        assert!(lines[7].starts_with("total,all,"));
        assert_eq!(lines.len(), 8);
    }
}
