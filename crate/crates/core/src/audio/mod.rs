//! Audio ingestion and log-mel feature extraction.
//!
//! There is no resampler: a waveform whose rate differs from the extraction
//! configuration is rejected and must be resampled offline.

mod mel;
mod wav;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use mel::{log_mel, mel_filterbank, stft_power, MelConfig, PowerSpectrogram, Preset};
pub use wav::{read_wav, read_wav_file, write_wav_file};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported WAV encoding: {0} (expected 16-bit PCM or 32-bit float, mono or stereo)")]
    Unsupported(String),
    #[error("malformed or truncated WAV file: {0}")]
    Malformed(String),
    #[error("WAV data chunk is empty")]
    EmptyData,
    #[error("sample rate {actual} Hz does not match the expected {expected} Hz; resample the file offline")]
    SampleRate { expected: u32, actual: u32 },
    #[error("clip has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid mel configuration: {0}")]
    Config(String),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::Config("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::EmptyData);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Where a crop starts when the clip is longer than requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offset {
    Start,
    /// Uniform over all valid starts, drawn from the given seed.
    Random(u64),
}

/// Exactly `round(seconds · rate)` samples: a window of the input, or the
/// input followed by zeros when it is too short.
pub fn crop_or_pad(w: &Waveform, seconds: f64, offset: Offset) -> Waveform {
    let target = ((seconds.max(0.0) * w.sample_rate as f64).round() as usize).max(1);
    let samples = if w.len() >= target {
        let start = match offset {
            Offset::Start => 0,
            Offset::Random(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..=w.len() - target),
        };
        w.samples[start..start + target].to_vec()
    } else {
        let mut s = w.samples.clone();
        s.resize(target, 0.0);
        s
    };
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, rate: u32) -> Waveform {
        Waveform::new((0..n).map(|i| i as f32 / n as f32).collect(), rate).unwrap()
    }

    #[test]
    fn crop_from_start() {
        let w = ramp(160_000, 16_000);
        let c = crop_or_pad(&w, 5.12, Offset::Start);
        assert_eq!(c.len(), 81_920);
        assert_eq!(c.samples(), &w.samples()[..81_920]);
    }

    #[test]
    fn pad_short_clip() {
        let w = ramp(16_000, 16_000);
        let c = crop_or_pad(&w, 2.08, Offset::Start);
        assert_eq!(c.len(), 33_280);
        assert_eq!(&c.samples()[..16_000], w.samples());
        assert_eq!(c.samples()[16_000..].len(), 17_280);
        assert!(c.samples()[16_000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_crop_is_seeded() {
        let w = ramp(50_000, 16_000);
        let a = crop_or_pad(&w, 1.0, Offset::Random(11));
        let b = crop_or_pad(&w, 1.0, Offset::Random(11));
        assert_eq!(a, b);
        let start = w.samples().iter().position(|&v| v == a.samples()[0]).unwrap();
        assert_eq!(&w.samples()[start..start + 16_000], a.samples());
    }

    #[test]
    fn empty_waveform_rejected() {
        assert!(matches!(Waveform::new(vec![], 16_000), Err(AudioError::EmptyData)));
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }
}
