//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "arin", version, about = "AudioRepInceptionNeXt inference runtime")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a log-mel spectrogram from a WAV file.
    Spectrogram(SpectrogramArgs),
    /// Convert a train-form weight file into inference form.
    Reparam(ReparamArgs),
    /// Classify a WAV file or a stored spectrogram.
    Infer(InferArgs),
    /// Measure forward-pass throughput.
    Bench(BenchArgs),
    /// Report parameter and multiply-accumulate counts.
    Flops(FlopsArgs),
    /// Write a randomly initialized train-form weight file.
    Init(InitArgs),
    /// Compare logits against a probe fixture produced by another runtime.
    VerifyProbe(VerifyProbeArgs),
}

/// `(frames, mel bins)`, written `512x128` or `512×128`.
pub fn parse_extent(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).collect();
    match parts.as_slice() {
        [h, w] => {
            let h: usize = h.trim().parse().map_err(|_| format!("bad frame count in '{s}'"))?;
            let w: usize = w.trim().parse().map_err(|_| format!("bad mel count in '{s}'"))?;
            if h == 0 || w == 0 {
                return Err(format!("extent '{s}' must be positive"));
            }
            Ok((h, w))
        }
        _ => Err(format!("expected FRAMESxMELS, got '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Vgg,
    Epic,
    Ks2,
    Urban,
}

impl From<PresetArg> for arin::audio::Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Vgg => Self::Vgg,
            PresetArg::Epic => Self::Epic,
            PresetArg::Ks2 => Self::Ks2,
            PresetArg::Urban => Self::Urban,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    B0,
    B1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Train,
    Inference,
}

impl From<ModeArg> for arin::model::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Train => Self::Train,
            ModeArg::Inference => Self::Inference,
        }
    }
}

/// Architecture selection shared by `init`, `flops` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    #[arg(long, value_enum, default_value = "b1")]
    pub variant: VariantArg,
    /// Ablation structure s1..s9 (applied to B1; overrides --variant).
    #[arg(long)]
    pub ablation: Option<String>,
    /// Use one group of k×k kernels instead of separable 1×k and k×1 groups.
    #[arg(long)]
    pub square: bool,
    /// Identity branches without their own batch norm.
    #[arg(long)]
    pub plain_identity: bool,
    #[arg(long, default_value_t = 309)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Dataset front end; sets rate, window, hop and crop length.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, conflicts_with = "preset")]
    pub sample_rate: Option<u32>,
    #[arg(long, conflicts_with = "preset")]
    pub window_ms: Option<f64>,
    #[arg(long, conflicts_with = "preset")]
    pub hop_ms: Option<f64>,
    #[arg(long, default_value_t = 128)]
    pub n_mels: usize,
    #[arg(long)]
    pub fft_size: Option<usize>,
    /// Crop or zero-pad to this many seconds (presets set it).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Random crop offset from this seed instead of starting at zero.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the spectrogram as a tensors file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReparamArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Compare train-form and inference-form logits on random inputs.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 4)]
    pub verify_samples: usize,
    /// Verification extent; defaults to the model's nominal input.
    #[arg(long, value_parser = parse_extent)]
    pub shape: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// WAV file or tensors file holding a spectrogram.
    #[arg(long)]
    pub input: PathBuf,
    /// Front end for WAV input.
    #[arg(long, value_enum, default_value = "vgg")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 5)]
    pub topk: usize,
    /// Class names, one per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark a weight file instead of a freshly built variant.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, value_enum, default_value = "inference")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long, default_value_t = 50)]
    pub timed: usize,
    #[arg(long, value_parser = parse_extent, default_value = "512x128")]
    pub shape: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the machine-readable JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Time the train form and its reparameterized form side by side.
    #[arg(long)]
    pub paired: bool,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, value_enum, default_value = "inference")]
    pub mode: ModeArg,
    #[arg(long, value_parser = parse_extent, default_value = "512x128")]
    pub shape: (usize, usize),
    /// Print one line per layer.
    #[arg(long)]
    pub rows: bool,
    /// Also cost the ResNet50 reference description at the same shape.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Nominal input extent recorded in the file and used for calibration.
    #[arg(long, value_parser = parse_extent, default_value = "512x128")]
    pub shape: (usize, usize),
    /// Keep unit running statistics instead of calibrating them on a
    /// seeded random batch.
    #[arg(long)]
    pub no_calibrate: bool,
    #[arg(long, default_value_t = 2)]
    pub calibration_batch: usize,
}

#[derive(Debug, Args)]
pub struct VerifyProbeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub probe: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn extents() {
        assert_eq!(parse_extent("512x128"), Ok((512, 128)));
        assert_eq!(parse_extent("416×128"), Ok((416, 128)));
        assert!(parse_extent("512").is_err());
        assert!(parse_extent("0x128").is_err());
    }
}
