//! End-to-end experiments: backward-pass checks, offset recovery, the
//! fusion ablation and the stage-interchange sweep.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{build_cls_variant, BackboneConfig, DualClassifier, StageKind, NUM_STAGES};
use crate::cmrf::{CeLayer, CsaLayer, FusionKind, SrfLayer};
use crate::complexity::{model_cost, ComplexityReport};
use crate::error::{Error, Result};
use crate::harness::data::{load_split, DatasetName, Normalization};
use crate::harness::synth::{gaussian_blur, synth_multispectral, SynthPairSpec};
use crate::harness::train::{train, translate, History, LrSchedule, Output, TrainConfig};
use crate::tensor::{
    gradcheck, sgd_step, GradcheckReport, Graph, Mode, NodeId, ParamStore, Shape, Tensor,
};
use crate::wavelet::{AdwtLayer, WaveletKernel};

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_SHAPE: Shape = Shape::new(1, 2, 6, 6);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradLayer {
    Adwt,
    Ce,
    Csa,
    Srf,
}

impl GradLayer {
    pub const ALL: [GradLayer; 4] = [
        GradLayer::Adwt,
        GradLayer::Ce,
        GradLayer::Csa,
        GradLayer::Srf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradLayer::Adwt => "adwt",
            GradLayer::Ce => "ce",
            GradLayer::Csa => "csa",
            GradLayer::Srf => "srf",
        }
    }
}

impl fmt::Display for GradLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GradLayer::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown layer `{s}` (adwt, ce, csa, srf, all)")))
    }
}

/// Checks one layer in double precision on `1 x 2 x 6 x 6` inputs. The
/// scalar under test is the squared distance to a random target, so no
/// output direction is degenerate (a plain sum is constant through batch
/// normalisation).
pub fn gradcheck_layer(layer: GradLayer, eps: f64, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::<f64>::randn(GRADCHECK_SHAPE, 1.0, &mut rng);
    let y = Tensor::<f64>::randn(GRADCHECK_SHAPE, 1.0, &mut rng);
    let mut store = ParamStore::<f64>::new();
    let target_of = |s: Shape, rng: &mut ChaCha8Rng| Tensor::<f64>::randn(s, 1.0, rng);
    match layer {
        GradLayer::Adwt => {
            let l = AdwtLayer::new(&mut store, "adwt", &WaveletKernel::haar());
            store.set_value(l.lambda1, Tensor::full(Shape::new(1, 1, 1, 1), 0.7))?;
            store.set_value(l.lambda2, Tensor::full(Shape::new(1, 1, 1, 1), -1.3))?;
            let t = target_of(Shape::new(1, 6, 3, 3), &mut rng);
            gradcheck(&mut store, &[x], eps, |g, ids| {
                let (it, a) = l.forward(g, ids[0])?;
                let both = g.concat(it, a)?;
                let target = g.input(t.clone());
                g.mse(both, target)
            })
        }
        GradLayer::Ce => {
            let l = CeLayer::new(&mut store, "ce", 2, 2, 2, &mut rng);
            for u in &l.units {
                store.set_value(u.beta, Tensor::randn(Shape::new(1, 2, 1, 1), 0.5, &mut rng))?;
            }
            let t = target_of(GRADCHECK_SHAPE, &mut rng);
            gradcheck(&mut store, &[x], eps, |g, ids| {
                let out = l.forward(g, ids[0])?;
                let target = g.input(t.clone());
                g.mse(out, target)
            })
        }
        GradLayer::Csa => {
            let l = CsaLayer::new(&mut store, "csa", 2, 2, 2, &mut rng);
            // move off the zero-offset lattice, where bilinear reads have kinks
            let off = Tensor::randn(store.value(l.offset).shape(), 0.1, &mut rng);
            store.set_value(l.offset, off)?;
            store.set_value(l.u, Tensor::randn(Shape::new(1, 1, 3, 3), 0.5, &mut rng))?;
            let t = target_of(GRADCHECK_SHAPE, &mut rng);
            gradcheck(&mut store, &[x, y], eps, |g, ids| {
                let out = l.forward(g, ids[0], ids[1])?;
                let target = g.input(t.clone());
                g.mse(out, target)
            })
        }
        GradLayer::Srf => {
            let l = SrfLayer::new(&mut store, "srf", 2, &mut rng);
            let t = target_of(GRADCHECK_SHAPE, &mut rng);
            gradcheck(&mut store, &[x, y], eps, |g, ids| {
                let out = l.forward(g, ids[0], ids[1])?;
                let target = g.input(t.clone());
                g.mse(out, target)
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckRow {
    pub layer: GradLayer,
    pub report: GradcheckReport,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err <= GRADCHECK_TOL
    }
}

pub fn gradcheck_suite(layers: &[GradLayer], eps: f64) -> Result<Vec<GradcheckRow>> {
    layers
        .iter()
        .map(|&layer| {
            Ok(GradcheckRow {
                layer,
                report: gradcheck_layer(layer, eps, 17)?,
            })
        })
        .collect()
}

pub fn gradcheck_table(rows: &[GradcheckRow]) -> String {
    let mut s = format!(
        "{:<6} {:>12} {:>8}  {:<24} {}\n",
        "layer", "max_rel_err", "checked", "worst", "status"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<6} {:>12.3e} {:>8}  {:<24} {}\n",
            r.layer.as_str(),
            r.report.max_rel_err,
            r.report.checked,
            r.report.worst,
            if r.passed() { "PASS" } else { "FAIL" }
        ));
    }
    s
}

/// Offset-recovery exercise: a CSA layer alone learns to undo a known
/// integer translation between two copies of the same feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetRecoveryConfig {
    pub seed: u64,
    pub shift_range: i32,
    pub steps: usize,
    pub trials: usize,
    pub maps_per_trial: usize,
    pub size: usize,
    pub lr: f32,
    /// Hidden width of the offset predictor.
    pub c_m: usize,
}

impl Default for OffsetRecoveryConfig {
    fn default() -> Self {
        OffsetRecoveryConfig {
            seed: 0,
            shift_range: 2,
            steps: 200,
            trials: 6,
            maps_per_trial: 4,
            size: 32,
            lr: 0.05,
            c_m: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetTrial {
    pub shift: (i32, i32),
    /// Root-mean-square misfit over the interior with zero offsets.
    pub baseline_err: f64,
    pub trained_err: f64,
    /// Mean predicted offset plus the centroid of the resampling window.
    pub recovered: (f64, f64),
    /// Per-step training loss.
    pub curve: Vec<f64>,
}

impl OffsetTrial {
    pub fn shift_error(&self) -> f64 {
        ((self.recovered.0 - self.shift.0 as f64).powi(2)
            + (self.recovered.1 - self.shift.1 as f64).powi(2))
        .sqrt()
    }

    pub fn baseline_shift_error(&self) -> f64 {
        ((self.shift.0 as f64).powi(2) + (self.shift.1 as f64).powi(2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetRecoveryReport {
    pub trials: Vec<OffsetTrial>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl OffsetRecoveryReport {
    pub fn mean_baseline_err(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.baseline_err))
    }

    pub fn mean_trained_err(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.trained_err))
    }

    /// Fractional reduction of the mean alignment error.
    pub fn reduction(&self) -> f64 {
        1.0 - self.mean_trained_err() / self.mean_baseline_err()
    }

    pub fn mean_shift_error(&self) -> f64 {
        mean(self.trials.iter().map(OffsetTrial::shift_error))
    }

    pub fn mean_baseline_shift_error(&self) -> f64 {
        mean(self.trials.iter().map(OffsetTrial::baseline_shift_error))
    }
}

impl fmt::Display for OffsetRecoveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trial  true(dy,dx)  recovered(dy,dx)  baseline_rms  trained_rms"
        )?;
        for (i, t) in self.trials.iter().enumerate() {
            writeln!(
                f,
                "{i:>5}  ({:>2},{:>2})      ({:>6.2},{:>6.2})    {:>12.4}  {:>11.4}",
                t.shift.0, t.shift.1, t.recovered.0, t.recovered.1, t.baseline_err, t.trained_err
            )?;
        }
        writeln!(
            f,
            "alignment error: baseline {:.4}, trained {:.4}, reduction {:.1}%",
            self.mean_baseline_err(),
            self.mean_trained_err(),
            100.0 * self.reduction()
        )?;
        write!(
            f,
            "shift error: without alignment {:.3} px, recovered {:.3} px",
            self.mean_baseline_shift_error(),
            self.mean_shift_error()
        )
    }
}

/// Smooth single-channel maps with a positive mean, built from the RGB side
/// of synthetic pairs.
/// Mean level of the synthetic alignment maps. Convolutions carry no bias, so a
/// spatially constant offset can only be read off this level.
pub const MAP_LEVEL: f32 = 1.0;
/// Standard deviation of each synthetic alignment map around [`MAP_LEVEL`].
pub const MAP_CONTRAST: f32 = 0.3;

pub fn alignment_maps(seed: u64, count: usize, size: usize) -> Result<Tensor<f32>> {
    let pairs = synth_multispectral(&SynthPairSpec {
        seed,
        count,
        size,
        shift_range: 0.0,
        ..SynthPairSpec::default()
    })?;
    let mut out = Tensor::zeros(Shape::new(count, 1, size, size));
    for n in 0..count {
        let mut grey = vec![0f32; size * size];
        for c in 0..3 {
            for (o, &v) in grey.iter_mut().zip(pairs.rgb.plane(n, c)) {
                *o += v / 3.0;
            }
        }
        let blurred = gaussian_blur(&grey, size, size, 1.5);
        let mean = blurred.iter().sum::<f32>() / blurred.len() as f32;
        let var =
            blurred.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / blurred.len() as f32;
        let scale = MAP_CONTRAST / var.sqrt().max(1e-6);
        for (o, v) in out.plane_mut(n, 0).iter_mut().zip(blurred) {
            *o = MAP_LEVEL + (v - mean) * scale;
        }
    }
    Ok(out)
}

fn rms_interior(a: &Tensor<f32>, b: &Tensor<f32>, margin: usize) -> f64 {
    let s = a.shape();
    let mut acc = 0f64;
    let mut count = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            let (pa, pb) = (a.plane(n, c), b.plane(n, c));
            for r in margin..s.h - margin {
                for q in margin..s.w - margin {
                    let d = (pa[r * s.w + q] - pb[r * s.w + q]) as f64;
                    acc += d * d;
                    count += 1;
                }
            }
        }
    }
    (acc / count as f64).sqrt()
}

fn offset_trial(
    cfg: &OffsetRecoveryConfig,
    trial: usize,
    shift: (i32, i32),
) -> Result<OffsetTrial> {
    let seed = cfg.seed.wrapping_mul(1000).wrapping_add(trial as u64);
    let reference = alignment_maps(seed, cfg.maps_per_trial, cfg.size)?;
    // the infrared copy shows content at (r + dy, c + dx)
    let shifts = vec![(shift.0 as isize, shift.1 as isize); cfg.maps_per_trial];
    let moved = translate(&reference, &shifts);
    let margin = cfg.shift_range as usize + 2;
    let inner = cfg.size - 2 * margin;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut store = ParamStore::<f32>::new();
    let csa = CsaLayer::new(&mut store, "csa", 1, 1, cfg.c_m, &mut rng);
    let baseline_err = rms_interior(&moved, &reference, margin);

    // (aligned, offsets, loss); training mode also back-propagates
    let run =
        |store: &mut ParamStore<f32>, mode: Mode| -> Result<(Tensor<f32>, Tensor<f32>, f64)> {
            let mut g = Graph::new(store, mode);
            let ir = g.input(reference.clone());
            let ft = g.input(moved.clone());
            let (_, off) = csa.predict_offsets(&mut g, ir, ft)?;
            let aligned = csa.align(&mut g, ft, off)?;
            let a = g.crop(aligned, margin, margin, inner, inner)?;
            let b = g.crop(ir, margin, margin, inner, inner)?;
            let loss: NodeId = g.mse(a, b)?;
            let lv = g.value(loss).data()[0] as f64;
            if !lv.is_finite() {
                return Err(Error::NonFinite(
                    g.first_non_finite().unwrap_or_else(|| "loss".into()),
                ));
            }
            let (al, of) = (g.value(aligned).clone(), g.value(off).clone());
            if mode == Mode::Train {
                g.backward(loss)?;
            }
            Ok((al, of, lv))
        };

    let mut curve = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (_, _, lv) = run(&mut store, Mode::Train)?;
        sgd_step(&mut store, cfg.lr, 0.0)?;
        curve.push(lv);
    }
    let (aligned, off, _) = run(&mut store, Mode::Eval)?;
    let trained_err = rms_interior(&aligned, &reference, margin);

    let os = off.shape();
    let (mut my, mut mx) = (0f64, 0f64);
    for n in 0..os.n {
        for r in margin..os.h - margin {
            for q in margin..os.w - margin {
                my += off.at(n, 0, r, q) as f64;
                mx += off.at(n, 1, r, q) as f64;
            }
        }
    }
    let cells = (os.n * inner * inner) as f64;
    let u = store.value(csa.u);
    let k = u.shape().h;
    let (mut sum, mut cy, mut cx) = (0f64, 0f64, 0f64);
    for a in 0..k {
        for b in 0..k {
            let w = u.at(0, 0, a, b) as f64;
            sum += w;
            cy += w * (a as f64 - (k / 2) as f64);
            cx += w * (b as f64 - (k / 2) as f64);
        }
    }
    let (cy, cx) = if sum.abs() > 1e-9 {
        (cy / sum, cx / sum)
    } else {
        (0.0, 0.0)
    };
    Ok(OffsetTrial {
        shift,
        baseline_err,
        trained_err,
        recovered: (my / cells + cy, mx / cells + cx),
        curve,
    })
}

/// Runs `trials` independent trials with non-zero shifts drawn from the
/// configured range.
pub fn offset_recovery(cfg: &OffsetRecoveryConfig) -> Result<OffsetRecoveryReport> {
    if cfg.shift_range < 1 || cfg.trials == 0 || cfg.maps_per_trial == 0 {
        return Err(Error::config(
            "offset recovery needs shift_range >= 1 and at least one trial and map",
        ));
    }
    if cfg.size < 2 * (cfg.shift_range as usize + 2) + 8 {
        return Err(Error::config("canvas too small for the shift range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.shift_range;
    let trials = (0..cfg.trials)
        .map(|i| {
            let shift = loop {
                let s = (rng.random_range(-r..=r), rng.random_range(-r..=r));
                if s != (0, 0) {
                    break s;
                }
            };
            offset_trial(cfg, i, shift)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OffsetRecoveryReport { trials })
}

/// Fusion ablation on synthetic misaligned pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    pub variants: Vec<FusionKind>,
    pub train_count: usize,
    pub test_count: usize,
    pub tau: f64,
    pub size: usize,
    pub shift_range: f32,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            seeds: vec![0, 1, 2],
            variants: FusionKind::ALL.to_vec(),
            train_count: 1536,
            test_count: 512,
            tau: 0.125,
            size: 32,
            shift_range: 2.0,
            train: TrainConfig {
                epochs: 6,
                lr: 0.05,
                weight_decay: 5e-4,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub variant: FusionKind,
    pub seed: u64,
    pub history: History,
}

impl AblationRun {
    pub fn test_acc(&self) -> f64 {
        self.history.last().map_or(0.0, |e| e.test_acc)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
}

pub const ABLATION_HEADER: &str = "variant,seed,epochs,train_acc,test_acc";

impl AblationReport {
    pub fn mean_acc(&self, variant: FusionKind) -> f64 {
        mean(
            self.runs
                .iter()
                .filter(|r| r.variant == variant)
                .map(AblationRun::test_acc),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{ABLATION_HEADER}\n");
        for r in &self.runs {
            let last = r.history.last();
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                r.variant,
                r.seed,
                r.history.epochs.len(),
                last.map_or(0.0, |e| e.train_acc),
                r.test_acc()
            ));
        }
        s
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut seen = Vec::new();
        for r in &self.runs {
            if !seen.contains(&r.variant) {
                seen.push(r.variant);
            }
        }
        for v in seen {
            let accs: Vec<String> = self
                .runs
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| format!("{:.4}", r.test_acc()))
                .collect();
            writeln!(
                f,
                "{:<9} mean {:.4}  [{}]",
                v.as_str(),
                self.mean_acc(v),
                accs.join(", ")
            )?;
        }
        Ok(())
    }
}

pub fn ablation_backbone(cfg: &AblationConfig) -> BackboneConfig {
    BackboneConfig::dual(cfg.tau, cfg.size)
}

/// Trains every variant on every seed. The data for a seed is shared by all
/// variants; model initialisation and batch order depend on the seed only.
pub fn run_ablation(
    cfg: &AblationConfig,
    mut progress: impl FnMut(&AblationRun),
) -> Result<AblationReport> {
    let bb = ablation_backbone(cfg);
    bb.validate()?;
    let mut report = AblationReport::default();
    for &seed in &cfg.seeds {
        let spec = |s: u64, count: usize| SynthPairSpec {
            seed: s,
            count,
            size: cfg.size,
            shift_range: cfg.shift_range,
            ..SynthPairSpec::default()
        };
        let train_set = synth_multispectral(&spec(seed * 2 + 100, cfg.train_count))?;
        let test_set = synth_multispectral(&spec(seed * 2 + 101, cfg.test_count))?;
        for &variant in &cfg.variants {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::<f32>::new();
            let model =
                DualClassifier::new(&mut store, &bb, variant, train_set.num_classes, &mut rng)?;
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let history = train(&model, &mut store, &train_set, &test_set, &tc, None)?;
            let run = AblationRun {
                variant,
                seed,
                history,
            };
            progress(&run);
            report.runs.push(run);
        }
    }
    Ok(report)
}

/// Stage-interchange sweep: the classifier with its first `d` stages
/// replaced by ADWT stages, for each requested depth.
#[derive(Clone, Debug, PartialEq)]
pub struct InterchangeConfig {
    pub dataset: DatasetName,
    pub depths: Vec<usize>,
    pub tau: f64,
    /// Caps on the number of samples taken from each split.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub train: TrainConfig,
}

impl InterchangeConfig {
    pub fn new(dataset: DatasetName) -> Self {
        InterchangeConfig {
            dataset,
            depths: (0..=NUM_STAGES).collect(),
            tau: 0.25,
            train_limit: None,
            test_limit: None,
            train: desk_train_config(7),
        }
    }
}

/// Training settings used for desk-scale classification runs. The last two
/// of ten epochs run at a tenth of the rate.
pub fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 10,
        lr: 0.1,
        schedule: LrSchedule::Step {
            from_epoch: 9,
            factor: 0.1,
        },
        weight_decay: 5e-4,
        batch_size: 64,
        seed,
        augment_shift: 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterchangeRow {
    pub depth: usize,
    pub cost: ComplexityReport,
    pub history: History,
}

impl InterchangeRow {
    pub fn test_acc(&self) -> f64 {
        self.history.last().map_or(0.0, |e| e.test_acc)
    }
}

pub const INTERCHANGE_HEADER: &str = "depth,params,flops_fwd,flops_bwd,train_acc,test_acc";

#[derive(Clone, Debug, PartialEq)]
pub struct InterchangeReport {
    pub dataset: DatasetName,
    pub rows: Vec<InterchangeRow>,
}

impl InterchangeReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{INTERCHANGE_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{:.6},{:.6}\n",
                r.depth,
                r.cost.params,
                r.cost.flops_forward,
                r.cost.flops_backward,
                r.history.last().map_or(0.0, |e| e.train_acc),
                r.test_acc()
            ));
        }
        s
    }

    pub fn row(&self, depth: usize) -> Option<&InterchangeRow> {
        self.rows.iter().find(|r| r.depth == depth)
    }
}

/// Loads a split pair, pads to a multiple of 32 and normalises with
/// statistics of the (possibly truncated) training split.
pub fn prepare_classification(
    name: DatasetName,
    root: &Path,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<(
    crate::harness::data::Dataset,
    crate::harness::data::Dataset,
    Normalization,
)> {
    let mut tr = load_split(name, root, true)?;
    let mut te = load_split(name, root, false)?;
    if let Some(n) = train_limit {
        tr = tr.take(n);
    }
    if let Some(n) = test_limit {
        te = te.take(n);
    }
    tr.pad_to_multiple(32)?;
    te.pad_to_multiple(32)?;
    let norm = Normalization::fit(&tr);
    norm.apply(&mut tr);
    norm.apply(&mut te);
    Ok((tr, te, norm))
}

pub fn run_interchange(
    cfg: &InterchangeConfig,
    root: &Path,
    mut progress: impl FnMut(&InterchangeRow),
) -> Result<InterchangeReport> {
    let (tr, te, _) = prepare_classification(cfg.dataset, root, cfg.train_limit, cfg.test_limit)?;
    let mut bb = BackboneConfig::classification();
    bb.tau = cfg.tau;
    bb.in_channels = cfg.dataset.channels();
    let mut rows = Vec::new();
    for &depth in &cfg.depths {
        let kinds = StageKind::prefix(depth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let mut store = ParamStore::<f32>::new();
        let model = build_cls_variant(&mut store, &bb, &kinds, tr.num_classes, &mut rng)?;
        let history = train(
            &model,
            &mut store,
            &tr,
            &te,
            &cfg.train,
            None::<&Output<'_>>,
        )?;
        let row = InterchangeRow {
            depth,
            cost: model_cost(&bb, &kinds, tr.num_classes)?.total(),
            history,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(InterchangeReport {
        dataset: cfg.dataset,
        rows,
    })
}
