use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioError, Result, Waveform};

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::Unsupported("unsupported WAV feature".into()),
        hound::Error::TooWide => AudioError::Unsupported("sample width too large".into()),
        hound::Error::InvalidSampleFormat => AudioError::Unsupported("invalid sample format".into()),
        hound::Error::FormatError(msg) => AudioError::Malformed(msg.to_string()),
        hound::Error::UnfinishedSample => AudioError::Malformed("data ends inside a sample".into()),
        hound::Error::IoError(io) => AudioError::Malformed(io.to_string()),
    }
}

/// Decodes a RIFF/WAVE byte buffer. Stereo is averaged to mono and 16-bit
/// samples are scaled by `1/32768`.
pub fn read_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(AudioError::Unsupported(format!("{channels} channels")));
    }
    if reader.len() == 0 {
        return Err(AudioError::EmptyData);
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>().map_err(map_hound)?,
        (format, bits) => {
            return Err(AudioError::Unsupported(format!("{bits}-bit {format:?}")));
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Malformed("data ends inside a frame".into()));
    }
    let samples = interleaved
        .chunks(channels)
        .map(|f| f.iter().sum::<f32>() / channels as f32)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

pub fn read_wav_file(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_wav(&bytes)
}

/// Writes mono 32-bit float WAV, which reads back bit-exactly.
pub fn write_wav_file(path: &Path, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => map_hound(other),
    };
    let mut writer = WavWriter::create(path, spec).map_err(io)?;
    for &s in w.samples() {
        writer.write_sample(s).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode<S: hound::Sample + Copy>(spec: WavSpec, samples: &[S]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        samples.iter().for_each(|&s| w.write_sample(s).unwrap());
        w.finalize().unwrap();
        buf.into_inner()
    }

    fn pcm16(channels: u16, rate: u32) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn pcm16_scaling() {
        let w = read_wav(&encode(pcm16(1, 16_000), &[32767i16, -32768, 0])).unwrap();
        assert_eq!(w.samples()[0], 0.999_969_5);
        assert_eq!(w.samples()[1], -1.0);
        assert_eq!(w.samples()[2], 0.0);
    }

    #[test]
    fn stereo_averages_to_mono() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let w = read_wav(&encode(spec, &[0.5f32, -0.5, 0.25, 0.75])).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5]);
    }

    #[test]
    fn one_second_length() {
        let w = read_wav(&encode(pcm16(1, 16_000), &vec![100i16; 16_000])).unwrap();
        assert_eq!(w.len(), 16_000);
        assert_eq!(w.sample_rate(), 16_000);
    }

    #[test]
    fn rejects_other_codecs() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8_000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        assert!(matches!(
            read_wav(&encode(spec, &[1i8, 2])),
            Err(AudioError::Unsupported(_))
        ));
    }

    #[test]
    fn empty_data_chunk() {
        let bytes = encode::<i16>(pcm16(1, 16_000), &[]);
        assert!(matches!(read_wav(&bytes), Err(AudioError::EmptyData)));
    }

    #[test]
    fn truncated_and_garbage() {
        let bytes = encode(pcm16(1, 16_000), &[7i16; 100]);
        assert!(matches!(
            read_wav(&bytes[..bytes.len() - 51]),
            Err(AudioError::Malformed(_))
        ));
        assert!(matches!(
            read_wav(b"not a riff file at all"),
            Err(AudioError::Malformed(_))
        ));
    }
}
