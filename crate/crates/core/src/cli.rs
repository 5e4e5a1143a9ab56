//! Command-line front end for the `wcc` binary.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{build_cls_variant, BackboneConfig, StageKind, NUM_STAGES};
use crate::cmrf::FusionKind;
use crate::complexity::model_cost;
use crate::error::{Error, Result};
use crate::harness::bench::{bench_stage, BenchComparison, BENCH_HEADER};
use crate::harness::config::{
    backbone_from_kv, stage_spec_from_kv, KvConfig, BACKBONE_KEYS, STAGE_KEYS,
};
use crate::harness::data::{data_root, DatasetName};
use crate::harness::experiments::{
    desk_train_config, gradcheck_suite, gradcheck_table, offset_recovery, prepare_classification,
    run_ablation, run_interchange, AblationConfig, GradLayer, InterchangeConfig,
    OffsetRecoveryConfig,
};
use crate::harness::synth::{synth_multispectral, SynthPairSpec};
use crate::harness::train::{train, Output, TrainConfig, TRAIN_KEYS};
use crate::tensor::ParamStore;

#[derive(Debug, Parser)]
#[command(name = "wcc", version, about = "Wavelet dual-stream backbone toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchKind {
    Cnn,
    Adwt,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference check of the hand-written backward passes.
    Gradcheck {
        /// adwt, ce, csa, srf or all.
        #[arg(long, default_value = "all")]
        layer: String,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Train a stage-interchange classifier; writes metrics.csv and best.wcck.
    TrainCls {
        #[arg(long)]
        dataset: String,
        /// Number of leading stages replaced by ADWT stages (0..=5).
        #[arg(long, default_value_t = 0)]
        swap_stages: usize,
        #[arg(long, default_value_t = 0.25)]
        tau: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lr: Option<f32>,
        #[arg(long)]
        weight_decay: Option<f32>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        augment_shift: Option<usize>,
        /// `constant` or `step:<epoch>:<factor>`.
        #[arg(long)]
        schedule: Option<String>,
        /// Key-value file with training settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use only the first N training samples.
        #[arg(long)]
        train_limit: Option<usize>,
        #[arg(long)]
        test_limit: Option<usize>,
        /// Dataset root; defaults to $WCC_DATA_DIR or ./data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Analytic parameter and MAC counts per stage.
    Complexity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        swap_stages: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Time forward passes of one stage.
    Bench {
        #[arg(long)]
        stage_spec: PathBuf,
        #[arg(long, value_enum, default_value_t = BenchKind::Both)]
        kind: BenchKind,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Train the spatial alignment alone on known shifts and report recovery.
    FuseDemo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        shift_range: i32,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 6)]
        trials: usize,
    },
    /// Generate misaligned RGB/infrared pairs.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fusion ablation on synthetic pairs (CSV on stdout).
    Ablation {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Train every swap depth on one dataset (CSV on stdout).
    Interchange {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        train_limit: Option<usize>,
        #[arg(long)]
        test_limit: Option<usize>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn swaps(depth: usize) -> Result<[StageKind; NUM_STAGES]> {
    StageKind::prefix(depth).map_err(|e| Error::Usage(e.to_string()))
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Executes a parsed command, writing reports to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gradcheck { layer, eps } => {
            let layers = if layer == "all" {
                GradLayer::ALL.to_vec()
            } else {
                vec![layer.parse()?]
            };
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Usage(format!("--eps must be positive, got {eps}")));
            }
            let rows = gradcheck_suite(&layers, eps)?;
            say(out, &gradcheck_table(&rows))?;
            if let Some(bad) = rows.iter().find(|r| !r.passed()) {
                return Err(Error::Gradcheck {
                    what: format!("{} at {}", bad.layer, bad.report.worst),
                    max_rel_err: bad.report.max_rel_err,
                    tolerance: crate::harness::experiments::GRADCHECK_TOL,
                });
            }
            Ok(())
        }
        Command::TrainCls {
            dataset,
            swap_stages,
            tau,
            epochs,
            seed,
            out: dir,
            lr,
            weight_decay,
            batch_size,
            augment_shift,
            schedule,
            config,
            train_limit,
            test_limit,
            data_dir,
        } => {
            let name: DatasetName = dataset.parse()?;
            let kinds = swaps(swap_stages)?;
            let mut tc = match &config {
                Some(p) => {
                    let kv = KvConfig::load(p)?;
                    kv.only(TRAIN_KEYS)?;
                    TrainConfig::from_kv(&kv)?
                }
                None => desk_train_config(seed),
            };
            tc.seed = seed;
            tc.epochs = epochs.unwrap_or(tc.epochs);
            tc.lr = lr.unwrap_or(tc.lr);
            tc.weight_decay = weight_decay.unwrap_or(tc.weight_decay);
            tc.batch_size = batch_size.unwrap_or(tc.batch_size);
            tc.augment_shift = augment_shift.unwrap_or(tc.augment_shift);
            if let Some(s) = schedule {
                tc.schedule = s.parse()?;
            }
            tc.validate()?;
            let root = data_dir.unwrap_or_else(data_root);
            let (tr, te, norm) = prepare_classification(name, &root, train_limit, test_limit)?;
            let mut bb = BackboneConfig::classification();
            bb.tau = tau;
            bb.in_channels = name.channels();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::<f32>::new();
            let model = build_cls_variant(&mut store, &bb, &kinds, tr.num_classes, &mut rng)?;
            let stats = norm.to_tensor();
            let output = Output {
                dir: dir.clone(),
                extras: vec![("normalization", &stats)],
            };
            say(
                out,
                &format!(
                    "{name}: {} train / {} test, swap depth {swap_stages}, {} counted parameters",
                    tr.len(),
                    te.len(),
                    crate::complexity::counted_params(&store)
                ),
            )?;
            let h = train(&model, &mut store, &tr, &te, &tc, Some(&output))?;
            for e in &h.epochs {
                say(
                    out,
                    &format!(
                        "epoch {:>2}  train loss {:.4} acc {:.4}  test loss {:.4} acc {:.4}",
                        e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc
                    ),
                )?;
            }
            say(out, &format!("wrote {}", dir.display()))
        }
        Command::Complexity {
            config,
            swap_stages,
            format,
        } => {
            let (bb, classes) = match &config {
                Some(p) => {
                    let kv = KvConfig::load(p)?;
                    kv.only(BACKBONE_KEYS)?;
                    (backbone_from_kv(&kv)?, kv.get_or("num_classes", 10usize)?)
                }
                None => (BackboneConfig::classification(), 10),
            };
            let cost = model_cost(&bb, &swaps(swap_stages)?, classes)?;
            say(
                out,
                &match format {
                    Format::Csv => cost.to_csv(),
                    Format::Table => cost.to_table(),
                },
            )
        }
        Command::Bench {
            stage_spec,
            kind,
            repeats,
            batch,
            format,
        } => {
            let kv = KvConfig::load(&stage_spec)?;
            kv.only(STAGE_KEYS)?;
            let spec = stage_spec_from_kv(&kv)?;
            let batch = kv.get_or("batch", batch)?;
            let reports = match kind {
                BenchKind::Cnn => vec![bench_stage(&spec, StageKind::Cnn, repeats, batch)?],
                BenchKind::Adwt => vec![bench_stage(&spec, StageKind::Adwt, repeats, batch)?],
                BenchKind::Both => {
                    let cmp = BenchComparison::run(&spec, repeats, batch)?;
                    if format == Format::Table {
                        return say(out, &cmp.to_string());
                    }
                    vec![cmp.cnn, cmp.adwt]
                }
            };
            match format {
                Format::Csv => {
                    say(out, BENCH_HEADER)?;
                    for r in &reports {
                        say(out, &r.csv_row())?;
                    }
                    Ok(())
                }
                Format::Table => reports.iter().try_for_each(|r| say(out, &r.to_string())),
            }
        }
        Command::FuseDemo {
            seed,
            shift_range,
            steps,
            trials,
        } => {
            let cfg = OffsetRecoveryConfig {
                seed,
                shift_range,
                steps,
                trials,
                ..OffsetRecoveryConfig::default()
            };
            let report = offset_recovery(&cfg)?;
            say(out, &report.to_string())
        }
        Command::Synth { spec, out: dir } => {
            let s = match &spec {
                Some(p) => SynthPairSpec::from_kv(&KvConfig::load(p)?)?,
                None => SynthPairSpec::default(),
            };
            let d = synth_multispectral(&s)?;
            d.save(&dir)?;
            say(
                out,
                &format!("wrote {} pairs to {}", d.len(), dir.display()),
            )
        }
        Command::Ablation {
            seeds,
            epochs,
            train_count,
            test_count,
        } => {
            let mut cfg = AblationConfig {
                seeds,
                ..AblationConfig::default()
            };
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train_count = train_count.unwrap_or(cfg.train_count);
            cfg.test_count = test_count.unwrap_or(cfg.test_count);
            let report = run_ablation(&cfg, |r| {
                eprintln!(
                    "{} seed {}: test acc {:.4}",
                    r.variant,
                    r.seed,
                    r.test_acc()
                );
            })?;
            say(out, &report.to_csv())?;
            say(out, &report.to_string())?;
            let ok = report.mean_acc(FusionKind::Cmrf) >= report.mean_acc(FusionKind::MidCat)
                && report.mean_acc(FusionKind::Cmrf) >= report.mean_acc(FusionKind::SrfOnly);
            say(
                out,
                if ok {
                    "ordering: cmrf best"
                } else {
                    "ordering: cmrf NOT best"
                },
            )
        }
        Command::Interchange {
            dataset,
            epochs,
            train_limit,
            test_limit,
            data_dir,
        } => {
            let mut cfg = InterchangeConfig::new(dataset.parse()?);
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train_limit = train_limit;
            cfg.test_limit = test_limit;
            let root = data_dir.unwrap_or_else(data_root);
            let report = run_interchange(&cfg, &root, |r| {
                eprintln!("depth {}: test acc {:.4}", r.depth, r.test_acc());
            })?;
            say(out, &report.to_csv())
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn main_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
