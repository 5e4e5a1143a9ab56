//! Wall-clock timing of single stages.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::StageKind;
use crate::complexity::{build_stage, stage_cost, ComplexityReport, StageSpec};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Mode, ParamStore, Tensor};

pub const WARMUP: usize = 2;
pub const BENCH_HEADER: &str =
    "kind,h,w,j,c_in,c_out,n,batch,repeats,median_ms,p10_ms,p90_ms,flops_fwd,params";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub kind: StageKind,
    pub spec: StageSpec,
    pub batch: usize,
    /// Milliseconds per forward pass, in run order.
    pub samples_ms: Vec<f64>,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
    pub analytic: ComplexityReport,
}

/// Nearest-rank percentile of already sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Lower median for even counts, so it is always an observed sample.
pub fn median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Times evaluation-mode forward passes of a freshly initialised stage on a
/// fixed random batch, after [`WARMUP`] untimed passes.
pub fn bench_stage(
    spec: &StageSpec,
    kind: StageKind,
    repeats: usize,
    batch: usize,
) -> Result<BenchReport> {
    if repeats == 0 || batch == 0 {
        return Err(Error::config("repeats and batch must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    let stage = build_stage(&mut store, spec, kind, &mut rng)?;
    let x = Tensor::randn(spec.input_shape(batch), 1.0, &mut rng);
    let mut run = || -> Result<f64> {
        let t = Instant::now();
        let mut g = Graph::new(&mut store, Mode::Eval);
        let xi = g.input(x.clone());
        let y = stage.forward(&mut g, xi)?;
        std::hint::black_box(g.value(y).data()[0]);
        Ok(t.elapsed().as_secs_f64() * 1e3)
    };
    for _ in 0..WARMUP {
        run()?;
    }
    let samples_ms = (0..repeats).map(|_| run()).collect::<Result<Vec<_>>>()?;
    let mut sorted = samples_ms.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        kind,
        spec: *spec,
        batch,
        median_ms: median(&sorted),
        p10_ms: percentile(&sorted, 0.1),
        p90_ms: percentile(&sorted, 0.9),
        samples_ms,
        analytic: stage_cost(spec, kind),
    })
}

impl BenchReport {
    pub fn csv_row(&self) -> String {
        let s = &self.spec;
        format!(
            "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{},{}",
            self.kind,
            s.h,
            s.w,
            s.j,
            s.c_in,
            s.c_out,
            s.n,
            self.batch,
            self.samples_ms.len(),
            self.median_ms,
            self.p10_ms,
            self.p90_ms,
            self.analytic.flops_forward,
            self.analytic.params
        )
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} median {:.3} ms  p10 {:.3}  p90 {:.3}  ({} runs, {} analytic MACs/pass)",
            self.kind,
            self.median_ms,
            self.p10_ms,
            self.p90_ms,
            self.samples_ms.len(),
            self.analytic.flops_forward * self.batch as u64
        )
    }
}

/// ADWT and CNN stages timed on the same spec.
#[derive(Clone, Debug)]
pub struct BenchComparison {
    pub cnn: BenchReport,
    pub adwt: BenchReport,
}

impl BenchComparison {
    pub fn run(spec: &StageSpec, repeats: usize, batch: usize) -> Result<Self> {
        Ok(BenchComparison {
            cnn: bench_stage(spec, StageKind::Cnn, repeats, batch)?,
            adwt: bench_stage(spec, StageKind::Adwt, repeats, batch)?,
        })
    }

    pub fn adwt_faster(&self) -> bool {
        self.adwt.median_ms < self.cnn.median_ms
    }

    pub fn speedup(&self) -> f64 {
        self.cnn.median_ms / self.adwt.median_ms
    }
}

impl fmt::Display for BenchComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.cnn)?;
        writeln!(f, "{}", self.adwt)?;
        write!(
            f,
            "{}: ADWT/CNN median ratio {:.3}",
            if self.adwt_faster() {
                "OK"
            } else {
                "FLAGGED (ADWT not faster)"
            },
            1.0 / self.speedup()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.1), 1.0);
        assert_eq!(percentile(&v, 0.9), 9.0);
        assert_eq!(median(&v), 5.0);
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(percentile(&[3.0], 0.9), 3.0);
    }

    #[test]
    fn single_repeat_and_ordering() {
        let spec = StageSpec::new(16, 16, 0, 4, 8, 1);
        let r = bench_stage(&spec, StageKind::Adwt, 1, 2).unwrap();
        assert_eq!(r.samples_ms.len(), 1);
        assert_eq!(r.median_ms, r.p90_ms);
        let r = bench_stage(&spec, StageKind::Cnn, 7, 2).unwrap();
        assert!(r.p10_ms <= r.median_ms && r.median_ms <= r.p90_ms);
        assert_eq!(r.analytic, stage_cost(&spec, StageKind::Cnn));
        assert_eq!(
            r.csv_row().split(',').count(),
            BENCH_HEADER.split(',').count()
        );
        assert!(bench_stage(&spec, StageKind::Cnn, 0, 2).is_err());
    }
}
