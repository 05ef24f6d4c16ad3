//! Subcommand implementations.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use arin::audio::{self, crop_or_pad, log_mel, read_wav_file, MelConfig, Offset, Preset};
use arin::metrics::{self, bench, cost_report, paired_bench, BenchConfig, CostReport};
use arin::model::{ablation_config, Init, Logits, Mode, ModelConfig, ModelError, ModelGraph};
use arin::reparam::{self, reparameterize};
use arin::tensor::{Shape4, Tensor4};
use arin::weights::{self, load_model, load_tensors, save_model, save_tensors, NamedTensor, Probe, MAGIC};
use thiserror::Error;

use crate::args::*;

/// Name of the tensor `spectrogram` writes and `infer` looks for first.
pub const SPECTROGRAM: &str = "spectrogram";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reparam(#[from] reparam::ReparamError),
    #[error(transparent)]
    Weights(#[from] weights::WeightsError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Tensor(#[from] arin::tensor::TensorError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{what}: max|Δ| = {diff:.3e} exceeds tolerance {tol:.0e}")]
    Verification { what: &'static str, diff: f64, tol: f64 },
}

impl CliError {
    /// 2 for a numerical check that ran and failed, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Spectrogram(a) => spectrogram(a),
        Command::Reparam(a) => reparam_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Flops(a) => flops(a),
        Command::Init(a) => init(a),
        Command::VerifyProbe(a) => verify_probe(a),
    }
}

fn model_config(arch: &ArchArgs, extent: (usize, usize)) -> Result<ModelConfig> {
    let mut cfg = match &arch.ablation {
        Some(id) => ablation_config(id, arch.classes)?,
        None => match arch.variant {
            VariantArg::B0 => ModelConfig::b0(arch.classes),
            VariantArg::B1 => ModelConfig::b1(arch.classes),
        },
    };
    if arch.square {
        cfg = cfg.into_square();
    }
    if arch.plain_identity {
        cfg = cfg.with_identity_bn(false);
    }
    cfg.input_extent = Some(extent);
    cfg.validate()?;
    Ok(cfg)
}

/// A seeded train-form graph whose batch-norm statistics are estimated on a
/// seeded random batch, so activations stay in a realistic range.
fn fresh_model(cfg: &ModelConfig, seed: u64, calibration_batch: Option<usize>) -> Result<ModelGraph> {
    let mut g = ModelGraph::build(cfg, Mode::Train, Init::Seeded(seed))?;
    if let Some(n) = calibration_batch {
        let (h, w) = cfg.input_extent.unwrap_or((512, 128));
        let x = Tensor4::seeded_uniform(Shape4::new(n, cfg.in_channels, h, w)?, -1.0, 1.0, seed ^ 0x5eed);
        g.calibrate_bn(&x)?;
    }
    Ok(g)
}

fn spectrogram(a: SpectrogramArgs) -> Result<()> {
    let (cfg, duration) = match a.preset {
        Some(p) => {
            let p = Preset::from(p);
            let mut cfg = p.mel_config();
            cfg.n_mels = a.n_mels;
            if let Some(f) = a.fft_size {
                cfg.fft_size = Some(f);
            }
            (cfg, Some(a.duration.unwrap_or(p.duration_s())))
        }
        None => {
            let (Some(rate), Some(win), Some(hop)) = (a.sample_rate, a.window_ms, a.hop_ms) else {
                return Err(CliError::Usage(
                    "give --preset, or all of --sample-rate, --window-ms and --hop-ms".into(),
                ));
            };
            let cfg = MelConfig {
                n_mels: a.n_mels,
                fft_size: a.fft_size,
                ..MelConfig::new(rate, win, hop)
            };
            (cfg, a.duration)
        }
    };
    cfg.validate()?;
    let mut wave = read_wav_file(&a.input)?;
    if let Some(secs) = duration {
        let offset = a.seed.map_or(Offset::Start, Offset::Random);
        wave = crop_or_pad(&wave, secs, offset);
    }
    let spec = log_mel(&wave, &cfg)?;
    println!("{}", spec.shape());
    if let Some(out) = a.out {
        save_tensors(&out, &[NamedTensor::from_tensor(SPECTROGRAM, &spec)])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn verification_input(g: &ModelGraph, shape: Option<(usize, usize)>, n: usize, seed: u64) -> Result<Tensor4<f32>> {
    let (h, w) = shape.or(g.config().input_extent).unwrap_or((512, 128));
    Ok(Tensor4::seeded_uniform(
        Shape4::new(n.max(1), g.config().in_channels, h, w)?,
        -1.0,
        1.0,
        seed,
    ))
}

fn nominal_input(g: &ModelGraph) -> Result<Shape4> {
    let (h, w) = g.config().input_extent.unwrap_or((512, 128));
    Ok(Shape4::new(1, g.config().in_channels, h, w)?)
}

fn reparam_cmd(a: ReparamArgs) -> Result<()> {
    let train = load_model(&a.weights)?;
    let infer = reparameterize(&train)?;
    let input = nominal_input(&train)?;
    let (before, after) = (cost_report(&train, input)?, cost_report(&infer, input)?);
    println!("params {:.2}M → {:.2}M", before.mparams(), after.mparams());
    println!("GFLOPs {:.3} → {:.3} at {input}", before.gflops(), after.gflops());
    save_model(&infer, &a.out)?;
    println!("wrote {}", a.out.display());
    if a.verify {
        let x = verification_input(&train, a.shape, a.verify_samples, a.seed)?;
        let diff = train.forward(&x)?.max_abs_diff(&infer.forward(&x)?)?;
        if diff < a.tol {
            println!("max|Δ| = {diff:.3e} < {:.0e}: PASS", a.tol);
        } else {
            println!("max|Δ| = {diff:.3e} ≥ {:.0e}: FAIL", a.tol);
            return Err(CliError::Verification {
                what: "train and inference forms disagree",
                diff,
                tol: a.tol,
            });
        }
    }
    Ok(())
}

fn is_weight_file(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).map_err(io_err(path))?;
    let n = f.read(&mut magic).map_err(io_err(path))?;
    Ok(n == 4 && &magic == MAGIC)
}

fn load_spectrogram(path: &Path) -> Result<Tensor4<f32>> {
    let tensors = load_tensors(path)?;
    let t = match tensors.iter().find(|t| t.name == SPECTROGRAM) {
        Some(t) => t,
        None if tensors.len() == 1 => &tensors[0],
        None => {
            return Err(CliError::Usage(format!(
                "{} holds {} tensors and none is named '{SPECTROGRAM}'",
                path.display(),
                tensors.len()
            )))
        }
    };
    Ok(t.to_tensor4()?)
}

fn softmax(row: &[f32]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let e: Vec<f64> = row.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn infer(a: InferArgs) -> Result<()> {
    let g = load_model(&a.weights)?;
    let x = if is_weight_file(&a.input)? {
        load_spectrogram(&a.input)?
    } else {
        let p = Preset::from(a.preset);
        let wave = crop_or_pad(&read_wav_file(&a.input)?, p.duration_s(), Offset::Start);
        log_mel(&wave, &p.mel_config())?
    };
    let s = x.shape();
    if let Some((h, w)) = g.config().input_extent {
        if (s.h, s.w) != (h, w) {
            return Err(CliError::Usage(format!(
                "input spectrogram is {s} but the model expects {}×{}×{h}×{w}; \
                 pick the matching --preset or pad/crop the input",
                s.n,
                g.config().in_channels
            )));
        }
    }
    let labels = match &a.labels {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            let l: Vec<String> = text.lines().map(str::to_owned).collect();
            if l.len() != g.config().num_classes {
                return Err(CliError::Usage(format!(
                    "{} has {} labels but the model has {} classes",
                    p.display(),
                    l.len(),
                    g.config().num_classes
                )));
            }
            Some(l)
        }
        None => None,
    };
    let logits: Logits<f32> = g.forward(&x)?;
    for i in 0..logits.shape().0 {
        if logits.shape().0 > 1 {
            println!("sample {i}");
        }
        let probs = softmax(logits.row(i));
        for (rank, (class, score)) in logits.top_k(i, a.topk).into_iter().enumerate() {
            let name = labels
                .as_ref()
                .map_or_else(|| format!("class {class}"), |l| l[class].clone());
            println!("{:>2}. {name:<24} logit {score:>9.4}  p {:.4}", rank + 1, probs[class]);
        }
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        batch: a.batch,
        extent: a.shape,
        warmup: a.warmup,
        timed: a.timed,
        threads: a.threads,
        seed: a.seed,
    };
    let loaded = match &a.weights {
        Some(p) => load_model(p)?,
        None => fresh_model(&model_config(&a.arch, a.shape)?, a.seed, Some(1))?,
    };
    let json = if a.paired {
        if loaded.mode() != Mode::Train {
            return Err(ModelError::WrongMode {
                expected: Mode::Train,
                actual: loaded.mode(),
            }
            .into());
        }
        let after = reparameterize(&loaded)?;
        let r = paired_bench(&loaded, &after, &cfg)?;
        println!(
            "{}: {:.2} samples/s, {:.2} ms/batch",
            r.before.mode, r.before.samples_per_sec, r.before.mean_latency_ms
        );
        println!(
            "{}: {:.2} samples/s, {:.2} ms/batch",
            r.after.mode, r.after.samples_per_sec, r.after.mean_latency_ms
        );
        println!("speedup {:.3}×", r.speedup);
        r.to_json()
    } else {
        let mode = Mode::from(a.mode);
        let g = match (loaded.mode(), mode) {
            (Mode::Train, Mode::Inference) => reparameterize(&loaded)?,
            (have, want) if have == want => loaded,
            (have, want) => {
                return Err(ModelError::WrongMode {
                    expected: want,
                    actual: have,
                }
                .into())
            }
        };
        let r = bench(&g, &cfg)?;
        println!(
            "{} {} batch {} threads {}: {:.2} samples/s, {:.2} ms/batch over {} batches",
            r.mode, r.input, r.batch_size, r.threads, r.samples_per_sec, r.mean_latency_ms, r.timed_batches
        );
        r.to_json()
    };
    if let Some(p) = &a.report {
        fs::write(p, json).map_err(io_err(p))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_cost(label: &str, r: &CostReport, rows: bool) {
    if rows {
        for row in &r.rows {
            println!("  {:<40} {:>10} params {:>14} MACs", row.name, row.params, row.flops);
        }
    }
    println!(
        "{label}: {} params ({:.3}M), {} MACs ({:.4} G) at {}",
        r.params,
        r.mparams(),
        r.flops,
        r.gflops(),
        r.input
    );
}

fn flops(a: FlopsArgs) -> Result<()> {
    let cfg = model_config(&a.arch, a.shape)?;
    let g = ModelGraph::build(&cfg, Mode::from(a.mode), Init::Empty)?;
    let input = Shape4::new(1, cfg.in_channels, a.shape.0, a.shape.1)?;
    print_cost(
        &format!("{} {}", cfg.variant, g.mode()),
        &cost_report(&g, input)?,
        a.rows,
    );
    if a.reference {
        let r = metrics::resnet50_reference(input, cfg.num_classes)?;
        print_cost("ResNet50 reference", &r, a.rows);
    }
    Ok(())
}

fn init(a: InitArgs) -> Result<()> {
    let cfg = model_config(&a.arch, a.shape)?;
    let batch = (!a.no_calibrate).then_some(a.calibration_batch.max(1));
    let g = fresh_model(&cfg, a.seed, batch)?;
    save_model(&g, &a.out)?;
    println!(
        "{} {} with {} parameters, seed {}: wrote {}",
        cfg.variant,
        g.mode(),
        g.param_count(),
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn verify_probe(a: VerifyProbeArgs) -> Result<()> {
    let g = load_model(&a.weights)?;
    let probe = Probe::from_tensors(&load_tensors(&a.probe)?)?;
    let diff = probe.max_abs_diff(&g)?;
    if diff < a.tol {
        println!("max|Δ| = {diff:.3e} < {:.0e}: PASS", a.tol);
        Ok(())
    } else {
        println!("max|Δ| = {diff:.3e} ≥ {:.0e}: FAIL", a.tol);
        Err(CliError::Verification {
            what: "logits differ from the probe",
            diff,
            tol: a.tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0, 1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[3] > 0.999);
    }

    #[test]
    fn exit_codes() {
        let v = CliError::Verification {
            what: "x",
            diff: 1.0,
            tol: 0.1,
        };
        assert_eq!(v.exit_code(), 2);
        assert_eq!(CliError::Usage("u".into()).exit_code(), 1);
    }
}
