//! Throughput harness: warm-up batches, then timed batches over one fixed
//! seeded input, with the wall clock read around the forward call only.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MetricsError, Result};
use crate::model::{Mode, ModelGraph};
use crate::tensor::{Shape4, Tensor4};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    pub batch: usize,
    /// `(frames, mel bins)`.
    pub extent: (usize, usize),
    pub warmup: usize,
    pub timed: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch: 1,
            extent: (512, 128),
            warmup: 50,
            timed: 50,
            threads: 1,
            seed: 0,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.timed == 0 || self.threads == 0 {
            return Err(MetricsError::Config(
                "batch, timed batches and threads must each be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn input(&self, channels: usize) -> Result<Tensor4<f32>> {
        let shape = Shape4::new(self.batch, channels, self.extent.0, self.extent.1)?;
        Ok(Tensor4::random_uniform(
            shape,
            -1.0,
            1.0,
            &mut ChaCha8Rng::seed_from_u64(self.seed),
        ))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| MetricsError::Config(format!("cannot start {} threads: {e}", self.threads)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub input: Shape4,
    pub batch_size: usize,
    pub warmup_batches: usize,
    pub timed_batches: usize,
    pub threads: usize,
    pub seed: u64,
    /// `batch_size · timed_batches / total timed seconds`.
    pub samples_per_sec: f64,
    pub mean_latency_ms: f64,
    pub latencies_ms: Vec<f64>,
}

impl BenchReport {
    fn new(g: &ModelGraph, cfg: &BenchConfig, input: Shape4, latencies_ms: Vec<f64>) -> Self {
        let total_ms: f64 = latencies_ms.iter().sum();
        Self {
            mode: g.mode(),
            input,
            batch_size: cfg.batch,
            warmup_batches: cfg.warmup,
            timed_batches: latencies_ms.len(),
            threads: cfg.threads,
            seed: cfg.seed,
            samples_per_sec: (cfg.batch * latencies_ms.len()) as f64 / (total_ms / 1e3),
            mean_latency_ms: total_ms / latencies_ms.len() as f64,
            latencies_ms,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn timed_forward(g: &ModelGraph, x: &Tensor4<f32>) -> Result<f64> {
    let start = Instant::now();
    let out = g.forward(x)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    drop(out);
    Ok(ms)
}

/// Runs `cfg.warmup` untimed then `cfg.timed` timed batches on a dedicated
/// pool of `cfg.threads` threads.
pub fn bench(g: &ModelGraph, cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let x = cfg.input(g.config().in_channels)?;
    g.check_input(&x)?;
    cfg.pool()?.install(|| {
        for _ in 0..cfg.warmup {
            g.forward(&x)?;
        }
        let latencies = (0..cfg.timed)
            .map(|_| timed_forward(g, &x))
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchReport::new(g, cfg, x.shape(), latencies))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedReport {
    pub before: BenchReport,
    pub after: BenchReport,
    /// `after.samples_per_sec / before.samples_per_sec`.
    pub speedup: f64,
}

impl PairedReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Benchmarks two graphs on the same input. Both are warmed up, then timed
/// batches alternate between them so drift in machine load affects both
/// sides equally.
pub fn paired_bench(before: &ModelGraph, after: &ModelGraph, cfg: &BenchConfig) -> Result<PairedReport> {
    cfg.validate()?;
    let x = cfg.input(before.config().in_channels)?;
    before.check_input(&x)?;
    after.check_input(&x)?;
    cfg.pool()?.install(|| {
        for _ in 0..cfg.warmup {
            before.forward(&x)?;
            after.forward(&x)?;
        }
        let (mut lb, mut la) = (Vec::with_capacity(cfg.timed), Vec::with_capacity(cfg.timed));
        for _ in 0..cfg.timed {
            lb.push(timed_forward(before, &x)?);
            la.push(timed_forward(after, &x)?);
        }
        let before = BenchReport::new(before, cfg, x.shape(), lb);
        let after = BenchReport::new(after, cfg, x.shape(), la);
        Ok(PairedReport {
            speedup: after.samples_per_sec / before.samples_per_sec,
            before,
            after,
        })
    })
}
