//! Minibatch SGD training and top-1 evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{checkpoint, Classifier, DualClassifier};
use crate::error::{Error, Result};
use crate::harness::config::KvConfig;
use crate::harness::data::Dataset;
use crate::harness::synth::PairDataset;
use crate::tensor::{sgd_step, Graph, Mode, NodeId, ParamStore, Tensor};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.wcck";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `lr * factor` from the given 1-based epoch on. Written `step:<epoch>:<factor>`.
    Step {
        from_epoch: usize,
        factor: f32,
    },
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "constant" {
            return Ok(LrSchedule::Constant);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if let ["step", epoch, factor] = parts.as_slice() {
            if let (Ok(from_epoch), Ok(factor)) = (epoch.parse::<usize>(), factor.parse::<f32>()) {
                if from_epoch >= 1 && factor.is_finite() && factor >= 0.0 {
                    return Ok(LrSchedule::Step { from_epoch, factor });
                }
            }
        }
        Err(Error::config(format!(
            "unknown lr schedule `{s}` (expected `constant` or `step:<epoch>:<factor>`)"
        )))
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LrSchedule::Constant => write!(f, "constant"),
            LrSchedule::Step { from_epoch, factor } => write!(f, "step:{from_epoch}:{factor}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Random translation of training batches by up to this many pixels.
    pub augment_shift: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.001,
            weight_decay: 0.02,
            batch_size: 64,
            seed: 0,
            schedule: LrSchedule::Constant,
            augment_shift: 0,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "lr",
    "weight_decay",
    "batch_size",
    "seed",
    "schedule",
    "augment_shift",
];

impl TrainConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let schedule = match kv.get::<String>("schedule")? {
            None => d.schedule,
            Some(text) => text.parse()?,
        };
        let cfg = TrainConfig {
            epochs: kv.get_or("epochs", d.epochs)?,
            lr: kv.get_or("lr", d.lr)?,
            weight_decay: kv.get_or("weight_decay", d.weight_decay)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            seed: kv.get_or("seed", d.seed)?,
            schedule,
            augment_shift: kv.get_or("augment_shift", d.augment_shift)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite())
            || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite())
        {
            return Err(Error::config(
                "lr and weight_decay must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Learning rate of a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f32 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Step { from_epoch, factor } if epoch >= from_epoch => self.lr * factor,
            LrSchedule::Step { .. } => self.lr,
        }
    }
}

/// Labelled samples that can be cut into model inputs.
pub trait Samples {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn labels(&self) -> &[usize];
    fn num_classes(&self) -> usize;
    fn inputs(&self, idx: &[usize]) -> Vec<Tensor<f32>>;
}

impl Samples for Dataset {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn labels(&self) -> &[usize] {
        &self.labels
    }
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn inputs(&self, idx: &[usize]) -> Vec<Tensor<f32>> {
        vec![self.images.gather(idx)]
    }
}

impl Samples for PairDataset {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn labels(&self) -> &[usize] {
        &self.labels
    }
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn inputs(&self, idx: &[usize]) -> Vec<Tensor<f32>> {
        vec![self.rgb.gather(idx), self.ir.gather(idx)]
    }
}

/// Anything mapping a list of input nodes to class logits.
pub trait Network {
    fn num_classes(&self) -> usize;
    fn logits(&self, g: &mut Graph<'_, f32>, inputs: &[NodeId]) -> Result<NodeId>;
}

fn arity(inputs: &[NodeId], want: usize) -> Result<()> {
    if inputs.len() != want {
        return Err(Error::shape(format!(
            "network takes {want} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

impl Network for Classifier {
    fn num_classes(&self) -> usize {
        self.head.out_features
    }
    fn logits(&self, g: &mut Graph<'_, f32>, inputs: &[NodeId]) -> Result<NodeId> {
        arity(inputs, 1)?;
        self.forward(g, inputs[0])
    }
}

impl Network for DualClassifier {
    fn num_classes(&self) -> usize {
        self.head.out_features
    }
    fn logits(&self, g: &mut Graph<'_, f32>, inputs: &[NodeId]) -> Result<NodeId> {
        arity(inputs, 2)?;
        self.forward(g, inputs[0], inputs[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.train_loss, self.train_acc, self.test_loss, self.test_acc
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochMetrics>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&e.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn best(&self) -> Option<&EpochMetrics> {
        self.epochs
            .iter()
            .fold(None, |b: Option<&EpochMetrics>, e| match b {
                Some(b) if b.test_acc >= e.test_acc => Some(b),
                _ => Some(e),
            })
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// Translates every sample by its own `(dy, dx)`, filling uncovered pixels
/// with the sample's top-left value in that channel.
pub fn translate(x: &Tensor<f32>, shifts: &[(isize, isize)]) -> Tensor<f32> {
    let s = x.shape();
    let mut out = x.clone();
    for (n, &(dy, dx)) in shifts.iter().enumerate() {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let fill = src[0];
            let dst = out.plane_mut(n, c);
            for r in 0..s.h {
                for col in 0..s.w {
                    let (sr, sc) = (r as isize - dy, col as isize - dx);
                    dst[r * s.w + col] =
                        if (0..s.h as isize).contains(&sr) && (0..s.w as isize).contains(&sc) {
                            src[sr as usize * s.w + sc as usize]
                        } else {
                            fill
                        };
                }
            }
        }
    }
    out
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(logits: &Tensor<f32>) -> Vec<usize> {
    let k = logits.shape().item();
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

pub fn count_correct(logits: &Tensor<f32>, labels: &[usize]) -> usize {
    argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

fn check_head<N: Network, S: Samples>(model: &N, data: &S) -> Result<()> {
    if model.num_classes() != data.num_classes() {
        return Err(Error::config(format!(
            "model head has {} classes, dataset has {}",
            model.num_classes(),
            data.num_classes()
        )));
    }
    Ok(())
}

fn non_finite(g: &Graph<'_, f32>) -> Error {
    Error::NonFinite(g.first_non_finite().unwrap_or_else(|| "loss".into()))
}

/// Frozen-statistics loss and top-1 accuracy.
pub fn evaluate<N: Network, S: Samples>(
    model: &N,
    store: &mut ParamStore<f32>,
    data: &S,
    batch_size: usize,
) -> Result<Evaluation> {
    if data.len() == 0 {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    check_head(model, data)?;
    let (mut loss, mut correct) = (0f64, 0usize);
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(batch_size.max(1)) {
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let mut g = Graph::new(store, Mode::Eval);
        let ins: Vec<NodeId> = data.inputs(idx).into_iter().map(|t| g.input(t)).collect();
        let logits = model.logits(&mut g, &ins)?;
        let l = g.cross_entropy(logits, &labels)?;
        let lv = g.value(l).data()[0] as f64;
        if !lv.is_finite() {
            return Err(non_finite(&g));
        }
        loss += lv * idx.len() as f64;
        correct += count_correct(g.value(logits), &labels);
    }
    Ok(Evaluation {
        loss: loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Where [`train`] writes `metrics.csv` and the best checkpoint.
#[derive(Clone, Debug)]
pub struct Output<'a> {
    pub dir: PathBuf,
    /// Stored next to the parameters in the checkpoint.
    pub extras: Vec<(&'a str, &'a Tensor<f32>)>,
}

impl<'a> Output<'a> {
    pub fn new(dir: &Path) -> Self {
        Output {
            dir: dir.to_path_buf(),
            extras: Vec::new(),
        }
    }
}

/// Trains with shuffled minibatches, evaluating on `test` after each epoch.
/// A trailing batch with a single sample is skipped, since batch statistics
/// of one sample are degenerate.
pub fn train<N: Network, S: Samples>(
    model: &N,
    store: &mut ParamStore<f32>,
    train_set: &S,
    test_set: &S,
    cfg: &TrainConfig,
    out: Option<&Output<'_>>,
) -> Result<History> {
    cfg.validate()?;
    if train_set.len() == 0 {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    check_head(model, train_set)?;
    if let Some(o) = out {
        fs::create_dir_all(&o.dir)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best_acc = f64::NEG_INFINITY;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let (mut loss_sum, mut correct, mut seen) = (0f64, 0usize, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let mut batch = train_set.inputs(idx);
            if cfg.augment_shift > 0 {
                let a = cfg.augment_shift as i64;
                let shifts: Vec<(isize, isize)> = idx
                    .iter()
                    .map(|_| {
                        (
                            rng.random_range(-a..=a) as isize,
                            rng.random_range(-a..=a) as isize,
                        )
                    })
                    .collect();
                batch = batch.iter().map(|t| translate(t, &shifts)).collect();
            }
            let mut g = Graph::new(store, Mode::Train);
            let ins: Vec<NodeId> = batch.into_iter().map(|t| g.input(t)).collect();
            let logits = model.logits(&mut g, &ins)?;
            let l = g.cross_entropy(logits, &labels)?;
            let lv = g.value(l).data()[0] as f64;
            if !lv.is_finite() {
                return Err(non_finite(&g));
            }
            loss_sum += lv * idx.len() as f64;
            correct += count_correct(g.value(logits), &labels);
            seen += idx.len();
            g.backward(l)?;
            drop(g);
            sgd_step(store, lr, cfg.weight_decay)?;
        }
        let test = evaluate(model, store, test_set, cfg.batch_size.max(256))?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: correct as f64 / seen.max(1) as f64,
            test_loss: test.loss,
            test_acc: test.accuracy,
        };
        history.epochs.push(m);
        if let Some(o) = out {
            fs::write(o.dir.join(METRICS_FILE), history.to_csv())?;
            if m.test_acc > best_acc {
                checkpoint::save_params(&o.dir.join(BEST_CHECKPOINT), store, &o.extras)?;
            }
        }
        best_acc = best_acc.max(m.test_acc);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Linear;
    use crate::tensor::{Shape, Tensor};

    /// Pool-and-linear model for fast checks.
    struct Probe {
        head: Linear,
    }

    impl Network for Probe {
        fn num_classes(&self) -> usize {
            self.head.out_features
        }
        fn logits(&self, g: &mut Graph<'_, f32>, inputs: &[NodeId]) -> Result<NodeId> {
            let p = g.global_avg_pool(inputs[0]);
            self.head.forward(g, p)
        }
    }

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let images = Tensor::from_fn(Shape::new(n, 2, 2, 2), |i, c, _, _| {
            let sign = if labels[i] == c { 1.0 } else { -1.0 };
            sign + rng.random_range(-0.3f32..0.3)
        });
        Dataset::new(images, labels, 2).unwrap()
    }

    fn probe(store: &mut ParamStore<f32>) -> Probe {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Probe {
            head: Linear::new(store, "head", 2, 2, &mut rng),
        }
    }

    #[test]
    fn separable_set_learned_quickly() {
        let mut store = ParamStore::new();
        let model = probe(&mut store);
        let d = separable(128, 2);
        let cfg = TrainConfig {
            epochs: 5,
            lr: 0.5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let h = train(&model, &mut store, &d, &d, &cfg, None).unwrap();
        assert!(h.last().unwrap().train_acc >= 0.99, "{h:?}");
    }

    #[test]
    fn zero_lr_keeps_weights_and_loss() {
        let mut store = ParamStore::new();
        let model = probe(&mut store);
        let before = store.clone();
        let d = separable(64, 3);
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            weight_decay: 0.0,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let h = train(&model, &mut store, &d, &d, &cfg, None).unwrap();
        for ((_, a), (_, b)) in before.iter().zip(store.iter()) {
            assert_eq!(a.value.data(), b.value.data());
        }
        // one full batch per epoch; only the summation order changes
        let (l0, t0) = (h.epochs[0].train_loss, h.epochs[0].test_loss);
        assert!(h
            .epochs
            .iter()
            .all(|e| (e.train_loss - l0).abs() < 1e-6 && e.test_loss == t0));
    }

    #[test]
    fn replay_is_identical_and_files_written() {
        let d = separable(100, 4);
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.1,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut csv = Vec::new();
        for dir in &dirs {
            let mut store = ParamStore::new();
            let model = probe(&mut store);
            train(
                &model,
                &mut store,
                &d,
                &d,
                &cfg,
                Some(&Output::new(dir.path())),
            )
            .unwrap();
            csv.push(fs::read(dir.path().join(METRICS_FILE)).unwrap());
            assert!(dir.path().join(BEST_CHECKPOINT).exists());
        }
        assert_eq!(csv[0], csv[1]);
        let text = String::from_utf8(csv[0].clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn translate_moves_content() {
        let x = Tensor::from_fn(Shape::new(2, 1, 3, 3), |n, _, h, w| {
            (n * 9 + h * 3 + w) as f32
        });
        let y = translate(&x, &[(1, 0), (0, -1)]);
        assert_eq!(
            y.plane(0, 0),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        );
        assert_eq!(
            y.plane(1, 0),
            &[10.0, 11.0, 9.0, 13.0, 14.0, 9.0, 16.0, 17.0, 9.0]
        );
        assert_eq!(translate(&x, &[(0, 0), (0, 0)]), x);
    }

    #[test]
    fn argmax_ties_and_oracle() {
        let t = Tensor::from_vec(
            Shape::new(3, 3, 1, 1),
            vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0, -1.0, -3.0, -2.0],
        )
        .unwrap();
        assert_eq!(argmax_rows(&t), vec![0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::<f32>::randn(Shape::new(50, 7, 1, 1), 1.0, &mut rng);
        for (i, &p) in argmax_rows(&t).iter().enumerate() {
            let row = t.item(i);
            assert!(row.iter().all(|&v| v <= row[p]));
            assert!(row[..p].iter().all(|&v| v < row[p]));
        }
    }

    #[test]
    fn chance_level_and_perfect_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 5000;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let t = Tensor::<f32>::randn(Shape::new(n, 10, 1, 1), 1.0, &mut rng);
        let acc = count_correct(&t, &labels) as f64 / n as f64;
        assert!((acc - 0.1).abs() < 0.02, "{acc}");
        let perfect = Tensor::from_fn(Shape::new(n, 10, 1, 1), |i, c, _, _| {
            if labels[i] == c {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(count_correct(&perfect, &labels), n);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut store = ParamStore::new();
        let model = probe(&mut store);
        let empty = separable(4, 1).subset(&[]);
        assert!(evaluate(&model, &mut store, &empty, 8).is_err());
        let three = Dataset::new(separable(4, 1).images, vec![0, 1, 2, 0], 3).unwrap();
        assert!(train(
            &model,
            &mut store,
            &three,
            &three,
            &TrainConfig::default(),
            None
        )
        .is_err());
        assert!(TrainConfig {
            lr: f32::NAN,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn step_schedule() {
        let s: LrSchedule = "step:9:0.1".parse().unwrap();
        assert_eq!(
            s,
            LrSchedule::Step {
                from_epoch: 9,
                factor: 0.1
            }
        );
        assert_eq!(s.to_string().parse::<LrSchedule>().unwrap(), s);
        let cfg = TrainConfig {
            lr: 0.5,
            schedule: s,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(8), 0.5);
        assert_eq!(cfg.lr_at(9), 0.5 * 0.1);
        assert_eq!(cfg.lr_at(10), 0.5 * 0.1);
        for bad in ["step", "step:0:0.1", "step:3:-1", "cosine", "step:2:x"] {
            assert!(bad.parse::<LrSchedule>().is_err(), "{bad}");
        }
        let kv = KvConfig::parse("schedule = step:2:0.5\n").unwrap();
        assert_eq!(
            TrainConfig::from_kv(&kv).unwrap().lr_at(2),
            TrainConfig::default().lr * 0.5
        );
    }

    #[test]
    fn nan_input_names_a_layer() {
        let mut store = ParamStore::new();
        let model = probe(&mut store);
        let mut d = separable(8, 1);
        d.images.data_mut()[0] = f32::NAN;
        match train(&model, &mut store, &d, &d, &TrainConfig::default(), None) {
            Err(Error::NonFinite(where_)) => assert!(!where_.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
