//! Acceptance checks, one line per criterion.
//!
//! Runs every criterion by default. Pass criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 1 4 9`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wcc_core::backbone::{StageKind, NUM_STAGES};
use wcc_core::cmrf::FusionKind;
use wcc_core::complexity::{
    adwt_stage_cost, build_stage, cnn_stage_cost, counted_params, measured_stage_macs, StageSpec,
};
use wcc_core::harness::bench::BenchComparison;
use wcc_core::harness::data::DatasetName;
use wcc_core::harness::experiments::{
    gradcheck_suite, offset_recovery, run_ablation, run_interchange, AblationConfig, GradLayer,
    InterchangeConfig, InterchangeReport, OffsetRecoveryConfig, GRADCHECK_TOL,
};
use wcc_core::harness::train::METRICS_FILE;
use wcc_core::tensor::{ParamStore, Shape, Tensor};
use wcc_core::wavelet::{dwt2d, idwt2d, WaveletKernel};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn data_root() -> PathBuf {
    std::env::var_os("WCC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

/// 100 random tensors with even sides, up to 2x4x32x32.
fn wavelet_corpus() -> Vec<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100)
        .map(|_| {
            let shape = Shape::new(
                rng.random_range(1..=2),
                rng.random_range(1..=4),
                2 * rng.random_range(1..=16),
                2 * rng.random_range(1..=16),
            );
            Tensor::randn(shape, 1.0, &mut rng)
        })
        .collect()
}

fn sq_norm_f64(t: &Tensor<f32>) -> f64 {
    t.data().iter().map(|&v| (v as f64) * (v as f64)).sum()
}

fn reconstruction() -> Outcome {
    let start = Instant::now();
    let k = WaveletKernel::haar();
    let mut worst = 0f32;
    for x in wavelet_corpus() {
        let y = idwt2d(&dwt2d(&x, &k).unwrap(), &k).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (a, b) in x.data().iter().zip(y.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "max reconstruction error {worst:.3e} (limit 1e-6), {:.3} s (limit 5 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn energy() -> Outcome {
    let k = WaveletKernel::haar();
    let mut worst = 0f64;
    for x in wavelet_corpus() {
        let s = dwt2d(&x, &k).unwrap();
        let e = sq_norm_f64(&s.ll) + sq_norm_f64(&s.lh) + sq_norm_f64(&s.hl) + sq_norm_f64(&s.hh);
        let e0 = sq_norm_f64(&x);
        worst = worst.max((e - e0).abs() / e0);
    }
    outcome(
        worst <= 1e-5,
        format!("max relative energy deviation {worst:.3e} (limit 1e-5)"),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let rows = match gradcheck_suite(&GradLayer::ALL, 1e-5) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("gradcheck failed to run: {e}")),
    };
    let elapsed = start.elapsed();
    let parts: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.2e}", r.layer, r.report.max_rel_err))
        .collect();
    outcome(
        rows.len() == 4 && rows.iter().all(|r| r.passed()) && elapsed < Duration::from_secs(120),
        format!(
            "max relative error {} (limit {GRADCHECK_TOL:e}), {:.2} s (limit 120 s)",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Every stage spec of the grid: H, W in {8,16,32}, C in {2,4,8,16},
/// N in {1,2}, K = 3, with the output width twice the input width.
fn grid() -> Vec<StageSpec> {
    let mut v = Vec::new();
    for h in [8, 16, 32] {
        for w in [8, 16, 32] {
            for c in [2, 4, 8, 16] {
                for n in [1, 2] {
                    v.push(StageSpec::new(h, w, 0, c, 2 * c, n));
                }
            }
        }
    }
    v
}

fn oracle_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for spec in grid() {
        for kind in [StageKind::Cnn, StageKind::Adwt] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut store = ParamStore::<f32>::new();
            let stage = build_stage(&mut store, &spec, kind, &mut rng).unwrap();
            let measured = measured_stage_macs(&mut store, &stage, &spec).unwrap();
            let analytic = match kind {
                StageKind::Cnn => cnn_stage_cost(&spec),
                StageKind::Adwt => adwt_stage_cost(&spec),
            };
            checked += 1;
            if measured != analytic.flops_forward || counted_params(&store) != analytic.params {
                mismatches.push(format!(
                    "{kind} {spec:?}: measured {measured}, analytic {}",
                    analytic.flops_forward
                ));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{checked} stages, {} mismatches {:?}",
            mismatches.len(),
            mismatches.first()
        ),
    )
}

fn dominance() -> Outcome {
    let mut violations = 0;
    let mut worst_ratio_err = 0f64;
    let cells = grid();
    for spec in &cells {
        let (cnn, adwt) = (cnn_stage_cost(spec), adwt_stage_cost(spec));
        if adwt.params >= cnn.params || adwt.flops_backward >= cnn.flops_backward {
            violations += 1;
        }
        let ratio = adwt.flops_backward as f64 / cnn.flops_backward as f64;
        let (c, cp, n) = (spec.c_in as f64, spec.c_out as f64, spec.n as f64);
        worst_ratio_err = worst_ratio_err.max((ratio - c / (n * cp + c)).abs());
    }
    outcome(
        violations == 0 && worst_ratio_err < 1e-12,
        format!(
            "{} cells, {violations} where ADWT params or backward cost is not lower; backward ratio deviation {worst_ratio_err:.1e}",
            cells.len()
        ),
    )
}

fn strictly_decreasing(v: &[u64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn interchange(
    dataset: DatasetName,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> (InterchangeReport, Duration) {
    let mut cfg = InterchangeConfig::new(dataset);
    cfg.train_limit = train_limit;
    cfg.test_limit = test_limit;
    let start = Instant::now();
    let report = run_interchange(&cfg, &data_root(), |r| {
        eprintln!(
            "  {} depth {}: test acc {:.4}",
            dataset.as_str(),
            r.depth,
            r.test_acc()
        );
    })
    .unwrap_or_else(|e| panic!("{} interchange failed: {e}", dataset.as_str()));
    (report, start.elapsed())
}

fn stage_interchange() -> Outcome {
    let budget = Duration::from_secs(45 * 60);
    let (mnist, t_mnist) = interchange(DatasetName::Mnist, None, None);
    let (fashion, t_fashion) = interchange(DatasetName::Fashion, Some(8000), Some(2000));

    let params: Vec<u64> = mnist.rows.iter().map(|r| r.cost.params).collect();
    let flops: Vec<u64> = mnist.rows.iter().map(|r| r.cost.flops_forward).collect();
    let trend = mnist.rows.len() == NUM_STAGES + 1
        && strictly_decreasing(&params)
        && strictly_decreasing(&flops);

    let acc = |r: &InterchangeReport, d: usize| r.row(d).map_or(0.0, |row| row.test_acc());
    let (m0, m5) = (acc(&mnist, 0), acc(&mnist, NUM_STAGES));
    let (f0, f5) = (acc(&fashion, 0), acc(&fashion, NUM_STAGES));
    let mnist_ok = m0 >= 0.97 && m0 - m5 <= 0.02;
    let fashion_ok = f0 - f5 <= 0.08;
    let time_ok = t_mnist <= budget && t_fashion <= budget;
    outcome(
        trend && mnist_ok && fashion_ok && time_ok,
        format!(
            "(a) costs strictly decreasing {trend}: params {} -> {}, MACs {} -> {}; \
             (b) MNIST all-CNN {m0:.4} (floor 0.97), all-ADWT {m5:.4}, gap {:.2} pt (limit 2.0); \
             (c) Fashion all-CNN {f0:.4}, all-ADWT {f5:.4}, gap {:.2} pt (limit 8.0); \
             time {:.1} / {:.1} min (limit 45)",
            params[0],
            params[params.len() - 1],
            flops[0],
            flops[flops.len() - 1],
            100.0 * (m0 - m5),
            100.0 * (f0 - f5),
            t_mnist.as_secs_f64() / 60.0,
            t_fashion.as_secs_f64() / 60.0
        ),
    )
}

fn ablation() -> Outcome {
    let cfg = AblationConfig::default();
    let report = run_ablation(&cfg, |r| {
        eprintln!(
            "  {} seed {}: test acc {:.4}",
            r.variant,
            r.seed,
            r.test_acc()
        );
    })
    .expect("ablation runs");
    let (full, srf, cat) = (
        report.mean_acc(FusionKind::Cmrf),
        report.mean_acc(FusionKind::SrfOnly),
        report.mean_acc(FusionKind::MidCat),
    );
    outcome(
        full >= cat && full >= srf,
        format!(
            "mean test acc over {} seeds: cmrf {full:.4}, mid-cat {cat:.4}, srf-only {srf:.4}",
            cfg.seeds.len()
        ),
    )
}

fn offsets() -> Outcome {
    let cfg = OffsetRecoveryConfig::default();
    let r = offset_recovery(&cfg).expect("offset recovery runs");
    outcome(
        cfg.steps <= 200 && r.reduction() >= 0.5,
        format!(
            "alignment error {:.4} -> {:.4}, reduction {:.1}% (floor 50%) after {} steps; shift error {:.2} -> {:.2} px",
            r.mean_baseline_err(),
            r.mean_trained_err(),
            100.0 * r.reduction(),
            cfg.steps,
            r.mean_baseline_shift_error(),
            r.mean_shift_error()
        ),
    )
}

fn benchmark() -> Outcome {
    let spec = StageSpec::new(64, 64, 0, 16, 32, 1);
    let cmp = BenchComparison::run(&spec, 15, 8).expect("bench runs");
    for line in cmp.to_string().lines() {
        eprintln!("  {line}");
    }
    outcome(
        cmp.adwt_faster(),
        format!(
            "C={} C'={} N=1 K=3 on {}x{}, batch 8: ADWT median {:.3} ms, CNN median {:.3} ms",
            spec.c_in, spec.c_out, spec.h, spec.w, cmp.adwt.median_ms, cmp.cnn.median_ms
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = data_root();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let args = [
            "wcc".to_string(),
            "train-cls".into(),
            "--dataset".into(),
            "mnist".into(),
            "--seed".into(),
            "7".into(),
            "--epochs".into(),
            "2".into(),
            "--train-limit".into(),
            "512".into(),
            "--test-limit".into(),
            "256".into(),
            "--data-dir".into(),
            root.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ];
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = wcc_core::cli::main_with(args, &mut o, &mut e);
        if code != 0 {
            return outcome(
                false,
                format!("train-cls exited {code}: {}", String::from_utf8_lossy(&e)),
            );
        }
        runs.push(std::fs::read(out.join(METRICS_FILE)).unwrap());
    }
    outcome(
        runs[0] == runs[1] && !runs[0].is_empty(),
        format!(
            "two seed-7 runs, metrics.csv {} and {} bytes, identical {}",
            runs[0].len(),
            runs[1].len(),
            runs[0] == runs[1]
        ),
    )
}

fn main() {
    type Check = (u32, &'static str, fn() -> Outcome);
    let criteria: [Check; 10] = [
        (1, "perfect reconstruction", reconstruction),
        (2, "energy preservation", energy),
        (3, "gradient suite", gradients),
        (4, "analytic MACs equal measured MACs", oracle_equivalence),
        (5, "ADWT complexity dominance", dominance),
        (6, "stage interchange trend", stage_interchange),
        (7, "fusion ablation ordering", ablation),
        (8, "alignment offset recovery", offsets),
        (9, "ADWT stage faster than CNN stage", benchmark),
        (10, "deterministic training metrics", determinism),
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
