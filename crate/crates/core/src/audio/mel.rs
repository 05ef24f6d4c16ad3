use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioError, Result, Waveform};
use crate::tensor::Tensor4;

/// Log-mel extraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    /// FFT length; `None` means the next power of two at or above the window.
    pub fft_size: Option<usize>,
    pub f_min: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
    /// Added to mel power before the natural log.
    pub log_floor: f64,
    /// Scale each triangle to unit area (Slaney style) instead of unit peak.
    pub area_normalize: bool,
    /// Reflect-pad half a window at both ends and emit `⌈len/hop⌉` frames
    /// centered on multiples of the hop. Without centering, frames start at
    /// multiples of the hop and `⌊(len − window)/hop⌋ + 1` are emitted.
    pub center: bool,
}

impl MelConfig {
    pub fn new(sample_rate: u32, window_ms: f64, hop_ms: f64) -> Self {
        Self {
            sample_rate,
            window_ms,
            hop_ms,
            n_mels: 128,
            fft_size: None,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-10,
            area_normalize: false,
            center: true,
        }
    }

    fn ms_to_samples(&self, ms: f64) -> usize {
        (self.sample_rate as f64 * ms / 1000.0).round() as usize
    }

    pub fn window_samples(&self) -> usize {
        self.ms_to_samples(self.window_ms)
    }

    pub fn hop_samples(&self) -> usize {
        self.ms_to_samples(self.hop_ms)
    }

    pub fn fft_len(&self) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.window_samples().next_power_of_two())
    }

    pub fn f_max_hz(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AudioError::Config(m));
        if self.sample_rate == 0 {
            return fail("sample rate must be positive".into());
        }
        let (win, hop) = (self.window_samples(), self.hop_samples());
        if win < 2 || hop == 0 {
            return fail(format!("window of {win} and hop of {hop} samples are too small"));
        }
        if self.hop_ms > self.window_ms {
            return fail(format!("hop {} ms exceeds window {} ms", self.hop_ms, self.window_ms));
        }
        if self.n_mels == 0 {
            return fail("need at least one mel band".into());
        }
        if self.fft_len() < win {
            return fail(format!(
                "FFT size {} is shorter than the {win}-sample window",
                self.fft_len()
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max_hz() && self.f_max_hz() <= nyquist) {
            return fail(format!(
                "need 0 ≤ f_min < f_max ≤ {nyquist} Hz, got {}..{}",
                self.f_min,
                self.f_max_hz()
            ));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return fail("log floor must be positive".into());
        }
        Ok(())
    }

    /// Frames produced for a clip of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        let (win, hop) = (self.window_samples(), self.hop_samples());
        if self.center {
            len.div_ceil(hop)
        } else if len < win {
            0
        } else {
            (len - win) / hop + 1
        }
    }
}

/// Dataset front ends: `(sample rate, window, hop, clip duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// VGG-Sound: 16 kHz, 20 ms / 10 ms, 5.12 s.
    Vgg,
    /// EPIC-KITCHENS-100 and EPIC-Sounds: 24 kHz, 10 ms / 5 ms, 2.08 s.
    Epic,
    /// Speech Commands V2: 16 kHz, 5 ms / 2 ms, 1.023 s.
    Ks2,
    /// UrbanSound8K and NSynth: 16 kHz, 20 ms / 10 ms, 4.16 s.
    Urban,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Vgg, Preset::Epic, Preset::Ks2, Preset::Urban];

    fn params(self) -> (u32, f64, f64, f64) {
        match self {
            Preset::Vgg => (16_000, 20.0, 10.0, 5.12),
            Preset::Epic => (24_000, 10.0, 5.0, 2.08),
            Preset::Ks2 => (16_000, 5.0, 2.0, 1.023),
            Preset::Urban => (16_000, 20.0, 10.0, 4.16),
        }
    }

    /// A 2048-point FFT for every preset, so the lowest mel triangles each
    /// cover at least one FFT bin.
    pub fn mel_config(self) -> MelConfig {
        let (rate, win, hop, _) = self.params();
        MelConfig {
            fft_size: Some(2048),
            ..MelConfig::new(rate, win, hop)
        }
    }

    pub fn sample_rate(self) -> u32 {
        self.params().0
    }

    pub fn duration_s(self) -> f64 {
        self.params().3
    }

    /// `(frames, mel bins)` of the spectrogram of one cropped clip.
    pub fn spectrogram_extent(self) -> (usize, usize) {
        let cfg = self.mel_config();
        let len = (self.duration_s() * self.sample_rate() as f64).round() as usize;
        (cfg.frames(len), cfg.n_mels)
    }
}

impl FromStr for Preset {
    type Err = AudioError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vgg" | "vggsound" => Ok(Preset::Vgg),
            "epic" => Ok(Preset::Epic),
            "ks2" => Ok(Preset::Ks2),
            "urban" | "urban8k" | "nsynth" => Ok(Preset::Urban),
            other => Err(AudioError::Config(format!(
                "unknown preset '{other}' (expected vgg, epic, ks2 or urban)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Vgg => "vgg",
            Preset::Epic => "epic",
            Preset::Ks2 => "ks2",
            Preset::Urban => "urban",
        })
    }
}

/// Power spectrogram, `frames × bins` row-major with `bins = fft/2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reflects about the edge samples without repeating them.
fn reflect_pad(x: &[f32], pad: usize) -> Vec<f64> {
    let n = x.len() as isize;
    (-(pad as isize)..n + pad as isize)
        .map(|i| {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            x[j.clamp(0, n - 1) as usize] as f64
        })
        .collect()
}

/// Hann-windowed short-time power spectrum.
pub fn stft_power(samples: &[f32], cfg: &MelConfig) -> Result<PowerSpectrogram> {
    cfg.validate()?;
    let (win, hop, nfft) = (cfg.window_samples(), cfg.hop_samples(), cfg.fft_len());
    if samples.len() < win {
        return Err(AudioError::TooShort {
            samples: samples.len(),
            window: win,
        });
    }
    let signal: Vec<f64> = if cfg.center {
        reflect_pad(samples, win / 2)
    } else {
        samples.iter().map(|&v| v as f64).collect()
    };
    let frames = cfg.frames(samples.len());
    let bins = nfft / 2 + 1;
    let window = hann_periodic(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &signal[t * hop..t * hop + win];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, (&s, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            c.re = s * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrogram { frames, bins, data })
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, `n_mels × (fft/2 + 1)`.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let nfft = cfg.fft_len();
    let bins = nfft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max_hz()));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / nfft as f64;
    Ok(edges
        .windows(3)
        .map(|e| {
            let (left, center, right) = (e[0], e[1], e[2]);
            let norm = if cfg.area_normalize { 2.0 / (right - left) } else { 1.0 };
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - left) / (center - left);
                    let down = (right - f) / (right - center);
                    up.min(down).max(0.0) * norm
                })
                .collect()
        })
        .collect())
}

/// `ln(mel power + floor)` as a `(1, 1, frames, n_mels)` tensor.
pub fn log_mel(w: &Waveform, cfg: &MelConfig) -> Result<Tensor4<f32>> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(AudioError::SampleRate {
            expected: cfg.sample_rate,
            actual: w.sample_rate(),
        });
    }
    let power = stft_power(w.samples(), cfg)?;
    let bank = mel_filterbank(cfg)?;
    let mut out = Vec::with_capacity(power.frames * cfg.n_mels);
    for t in 0..power.frames {
        let frame = power.frame(t);
        out.extend(bank.iter().map(|row| {
            let e: f64 = row.iter().zip(frame).map(|(a, b)| a * b).sum();
            (e + cfg.log_floor).ln() as f32
        }));
    }
    Tensor4::from_dims([1, 1, power.frames, cfg.n_mels], out).map_err(|e| AudioError::Config(e.to_string()))
}
