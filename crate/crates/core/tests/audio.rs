use std::f64::consts::PI;

use arin::audio::{
    crop_or_pad, log_mel, mel_filterbank, read_wav, read_wav_file, stft_power, write_wav_file, AudioError, MelConfig,
    Offset, Preset, Waveform,
};
use proptest::prelude::*;

fn sine(freq: f64, rate: u32, seconds: f64) -> Vec<f32> {
    let n = (rate as f64 * seconds) as usize;
    (0..n)
        .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() as f32)
        .collect()
}

#[test]
fn preset_shapes() {
    assert_eq!(Preset::Vgg.spectrogram_extent(), (512, 128));
    assert_eq!(Preset::Epic.spectrogram_extent(), (416, 128));
    assert_eq!(Preset::Ks2.spectrogram_extent(), (512, 128));
    assert_eq!(Preset::Urban.spectrogram_extent(), (416, 128));
    for p in Preset::ALL {
        let w = Waveform::new(sine(440.0, p.sample_rate(), 0.7), p.sample_rate()).unwrap();
        let clip = crop_or_pad(&w, p.duration_s(), Offset::Start);
        let (h, m) = p.spectrogram_extent();
        assert_eq!(
            log_mel(&clip, &p.mel_config()).unwrap().shape().dims(),
            [1, 1, h, m],
            "{p}"
        );
    }
}

/// 1 kHz at 16 kHz with a 512-point window lands exactly on bin 32.
fn bin_centred_frame() -> Vec<f64> {
    let cfg = MelConfig::new(16_000, 32.0, 16.0);
    assert_eq!(cfg.fft_len(), 512);
    let p = stft_power(&sine(1000.0, 16_000, 0.5), &cfg).unwrap();
    p.frame(p.frames / 2).to_vec()
}

#[test]
fn bin_centred_sine_stays_within_one_bin_of_peak() {
    let frame = bin_centred_frame();
    let total: f64 = frame.iter().sum();
    let peak = frame.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 32);
    let near: f64 = frame[peak - 1..=peak + 1].iter().sum();
    assert!(near / total >= 0.9, "{}", near / total);
}

#[test]
fn hann_two_bin_share_is_five_sixths() {
    // Peak plus its larger neighbour: (1 + 1/4) / (1 + 1/4 + 1/4).
    let frame = bin_centred_frame();
    let total: f64 = frame.iter().sum();
    let share = (frame[32] + frame[31].max(frame[33])) / total;
    assert!((share - 5.0 / 6.0).abs() < 1e-3, "{share}");
}

#[test]
fn filterbank_shape_and_range() {
    for p in Preset::ALL {
        let cfg = p.mel_config();
        let bank = mel_filterbank(&cfg).unwrap();
        assert_eq!(bank.len(), 128);
        let mut last_centre = 0;
        for (i, row) in bank.iter().enumerate() {
            assert_eq!(row.len(), cfg.fft_len() / 2 + 1);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(row.iter().any(|&v| v > 0.0), "{p}: filter {i} covers no bin");
            let centre = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(centre >= last_centre);
            last_centre = centre;
        }
    }
}

#[test]
fn area_normalized_filters_have_unit_area_in_hz() {
    let cfg = MelConfig {
        area_normalize: true,
        fft_size: Some(8192),
        n_mels: 40,
        ..MelConfig::new(16_000, 20.0, 10.0)
    };
    let bin_hz = 16_000.0 / 8192.0;
    for row in mel_filterbank(&cfg).unwrap().iter().skip(5) {
        let area: f64 = row.iter().sum::<f64>() * bin_hz;
        assert!((area - 1.0).abs() < 0.05, "{area}");
    }
}

#[test]
fn silence_hits_the_log_floor() {
    let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
    let spec = log_mel(&w, &Preset::Vgg.mel_config()).unwrap();
    let floor = (1e-10f64).ln() as f32;
    assert!(spec.data().iter().all(|&v| v == floor));
}

#[test]
fn extraction_is_deterministic() {
    let w = Waveform::new(sine(300.0, 16_000, 2.0), 16_000).unwrap();
    let cfg = Preset::Vgg.mel_config();
    assert_eq!(log_mel(&w, &cfg).unwrap(), log_mel(&w, &cfg).unwrap());
    let long = Waveform::new(sine(300.0, 16_000, 9.0), 16_000).unwrap();
    let a = crop_or_pad(&long, 5.12, Offset::Random(4));
    assert_eq!(a, crop_or_pad(&long, 5.12, Offset::Random(4)));
    assert_ne!(a, crop_or_pad(&long, 5.12, Offset::Random(5)));
}

#[test]
fn uncentred_frame_count() {
    let cfg = MelConfig {
        center: false,
        ..MelConfig::new(16_000, 25.0, 10.0)
    };
    assert_eq!(cfg.frames(16_000), (16_000 - 400) / 160 + 1);
    let p = stft_power(&vec![0.1; 16_000], &cfg).unwrap();
    assert_eq!(p.frames, cfg.frames(16_000));
}

#[test]
fn wrong_rate_and_short_clips_fail() {
    let w = Waveform::new(sine(440.0, 22_050, 1.0), 22_050).unwrap();
    let err = log_mel(&w, &Preset::Vgg.mel_config()).unwrap_err();
    assert!(matches!(
        err,
        AudioError::SampleRate {
            expected: 16_000,
            actual: 22_050
        }
    ));
    let tiny = Waveform::new(vec![0.0; 10], 16_000).unwrap();
    assert!(matches!(
        log_mel(&tiny, &Preset::Vgg.mel_config()),
        Err(AudioError::TooShort { .. })
    ));
}

fn pcm16_bytes(channels: u16, frames: &[i16]) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
    frames.iter().for_each(|&s| w.write_sample(s).unwrap());
    w.finalize().unwrap();
    cursor.into_inner()
}

#[test]
fn pcm16_mono_and_stereo() {
    let mono = read_wav(&pcm16_bytes(1, &[16384, -32768, 0])).unwrap();
    assert_eq!(mono.samples(), &[0.5, -1.0, 0.0]);
    let stereo = read_wav(&pcm16_bytes(2, &[16384, 0, -16384, -16384])).unwrap();
    assert_eq!(stereo.samples(), &[0.25, -0.5]);
    assert!(matches!(read_wav(&pcm16_bytes(1, &[])), Err(AudioError::EmptyData)));
    assert!(matches!(read_wav(b"RIFF????WAVE"), Err(AudioError::Malformed(_))));
}

#[test]
fn float_wav_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let w = Waveform::new(sine(123.0, 24_000, 0.25), 24_000).unwrap();
    write_wav_file(&path, &w).unwrap();
    assert_eq!(read_wav_file(&path).unwrap(), w);
    let err = read_wav_file(&dir.path().join("missing.wav")).unwrap_err();
    assert!(err.to_string().contains("missing.wav"));
}

proptest! {
    #[test]
    fn crop_or_pad_length(len in 1usize..5000, seconds in 0.01f64..0.4, seed in any::<u64>()) {
        let w = Waveform::new(vec![0.5; len], 8_000).unwrap();
        let out = crop_or_pad(&w, seconds, Offset::Random(seed));
        prop_assert_eq!(out.len(), (seconds * 8_000.0).round() as usize);
        prop_assert_eq!(out.sample_rate(), 8_000);
    }

    #[test]
    fn centred_frames_cover_clip(len in 400usize..20_000) {
        let cfg = MelConfig::new(16_000, 25.0, 10.0);
        let p = stft_power(&vec![0.0; len], &cfg).unwrap();
        prop_assert_eq!(p.frames, len.div_ceil(160));
    }
}
