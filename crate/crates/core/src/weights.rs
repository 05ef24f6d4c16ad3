//! Single-file weight container.
//!
//! ```text
//! "ARIN"            4 bytes
//! version           u32 LE (currently 1)
//! header length     u64 LE
//! header            UTF-8 JSON, space-padded so the payload is 8-byte aligned
//! payload           little-endian f32 tensors
//! ```
//!
//! The header holds the file kind (`model` or `tensors`), the model
//! configuration and mode for model files, and a manifest of
//! `{name, dtype, shape, byte_offset, byte_length}` entries with offsets
//! relative to the payload start. Tensor files carry loose named tensors
//! such as spectrograms and probe fixtures.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Init, Mode, ModelConfig, ModelError, ModelGraph};
use crate::tensor::{Shape4, Tensor4};

pub const MAGIC: &[u8; 4] = b"ARIN";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weight file (missing ARIN magic)")]
    NotWeightFile,
    #[error("file is truncated: {0}")]
    Truncated(String),
    #[error("format version {found} is not supported (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected a {expected} file, found a {found} file")]
    Kind { expected: FileKind, found: FileKind },
    #[error("tensor '{name}' has dtype '{dtype}'; only f32 is supported")]
    Dtype { name: String, dtype: String },
    #[error("tensor '{name}' spans bytes {start}..{end} but the payload holds only {payload} bytes")]
    OutOfBounds {
        name: String,
        start: u64,
        end: u64,
        payload: u64,
    },
    #[error("tensor '{name}' starts at byte offset {offset}, which is not 4-byte aligned")]
    Misaligned { name: String, offset: u64 },
    #[error("tensor '{name}' declares {byte_length} bytes but shape {shape:?} needs {expected}")]
    Length {
        name: String,
        shape: Vec<usize>,
        byte_length: u64,
        expected: u64,
    },
    #[error("tensors '{first}' and '{second}' overlap")]
    Overlap { first: String, second: String },
    #[error("duplicate tensor name '{0}'")]
    Duplicate(String),
    #[error("weight file is missing tensor '{first}' ({count} missing in total)")]
    MissingTensor { first: String, count: usize },
    #[error("weight file has tensors the model does not use: {}", .0.join(", "))]
    UnexpectedTensors(Vec<String>),
    #[error("tensor '{name}' has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor '{0}' holds a negative running variance")]
    NegativeVariance(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = WeightsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Model,
    Tensors,
}

impl std::fmt::Display for FileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FileKind::Model => "model",
            FileKind::Tensors => "tensors",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: FileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub tensors: Vec<TensorEntry>,
}

/// A loose tensor in a `tensors` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn from_tensor(name: impl Into<String>, t: &Tensor4<f32>) -> Self {
        Self::new(name, t.shape().dims().to_vec(), t.data().to_vec())
    }

    /// Rank-4 view; lower ranks are left-padded with ones.
    pub fn to_tensor4(&self) -> Result<Tensor4<f32>> {
        if self.shape.len() > 4 {
            return Err(WeightsError::Header(format!(
                "tensor '{}' has rank {}, expected at most 4",
                self.name,
                self.shape.len()
            )));
        }
        let mut dims = [1usize; 4];
        dims[4 - self.shape.len()..].copy_from_slice(&self.shape);
        let shape = Shape4::new(dims[0], dims[1], dims[2], dims[3]).map_err(|e| WeightsError::Header(e.to_string()))?;
        Tensor4::new(shape, self.data.clone()).map_err(|e| WeightsError::Header(e.to_string()))
    }
}

fn encode(mut header: Header, tensors: &[(&str, &[usize], &[f32])]) -> Vec<u8> {
    let mut offset = 0u64;
    header.tensors = tensors
        .iter()
        .map(|(name, shape, data)| {
            let len = 4 * data.len() as u64;
            let e = TensorEntry {
                name: name.to_string(),
                dtype: "f32".into(),
                shape: shape.to_vec(),
                byte_offset: offset,
                byte_length: len,
            };
            offset += len;
            e
        })
        .collect();
    let mut json = serde_json::to_vec(&header).expect("header serializes");
    while !(PREAMBLE + json.len()).is_multiple_of(8) {
        json.push(b' ');
    }
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in tensors {
        data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

/// Parses and validates the preamble, header and manifest. Returns the
/// header and the payload slice.
pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::NotWeightFile);
    }
    if bytes.len() < PREAMBLE {
        return Err(WeightsError::Truncated("preamble ends early".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion { found: version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = (PREAMBLE as u64)
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| WeightsError::Truncated(format!("header of {header_len} bytes does not fit the file")))?
        as usize;
    let header: Header =
        serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(|e| WeightsError::Header(e.to_string()))?;
    let payload = &bytes[header_end..];
    validate_manifest(&header.tensors, payload.len() as u64)?;
    Ok((header, payload))
}

fn validate_manifest(entries: &[TensorEntry], payload: u64) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.name.as_str()) {
            return Err(WeightsError::Duplicate(e.name.clone()));
        }
        if e.dtype != "f32" {
            return Err(WeightsError::Dtype {
                name: e.name.clone(),
                dtype: e.dtype.clone(),
            });
        }
        let expected = e
            .shape
            .iter()
            .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64))
            .unwrap_or(u64::MAX);
        if e.byte_length != expected {
            return Err(WeightsError::Length {
                name: e.name.clone(),
                shape: e.shape.clone(),
                byte_length: e.byte_length,
                expected,
            });
        }
        if e.byte_offset % 4 != 0 {
            return Err(WeightsError::Misaligned {
                name: e.name.clone(),
                offset: e.byte_offset,
            });
        }
        let end = e.byte_offset.saturating_add(e.byte_length);
        if end > payload {
            return Err(WeightsError::OutOfBounds {
                name: e.name.clone(),
                start: e.byte_offset,
                end,
                payload,
            });
        }
    }
    let mut order: Vec<&TensorEntry> = entries.iter().filter(|e| e.byte_length > 0).collect();
    order.sort_by_key(|e| e.byte_offset);
    for w in order.windows(2) {
        if w[0].byte_offset + w[0].byte_length > w[1].byte_offset {
            return Err(WeightsError::Overlap {
                first: w[0].name.clone(),
                second: w[1].name.clone(),
            });
        }
    }
    Ok(())
}

fn tensor_data(payload: &[u8], e: &TensorEntry) -> Vec<f32> {
    payload[e.byte_offset as usize..(e.byte_offset + e.byte_length) as usize]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_model(g: &ModelGraph) -> Vec<u8> {
    let params = g.parameters();
    let tensors: Vec<(&str, &[usize], &[f32])> = params
        .iter()
        .map(|p| (p.name.as_str(), p.shape.as_slice(), p.data))
        .collect();
    let header = Header {
        kind: FileKind::Model,
        config: Some(g.config().clone()),
        mode: Some(g.mode()),
        tensors: Vec::new(),
    };
    encode(header, &tensors)
}

/// Builds the graph the header describes and fills every parameter from the
/// payload. The manifest must name exactly the graph's parameters.
pub fn decode_model(bytes: &[u8]) -> Result<ModelGraph> {
    let (header, payload) = read_header(bytes)?;
    if header.kind != FileKind::Model {
        return Err(WeightsError::Kind {
            expected: FileKind::Model,
            found: header.kind,
        });
    }
    let config = header
        .config
        .ok_or_else(|| WeightsError::Header("model file without a config".into()))?;
    let mode = header
        .mode
        .ok_or_else(|| WeightsError::Header("model file without a mode".into()))?;
    let mut graph = ModelGraph::build(&config, mode, Init::Empty)?;
    let manifest: HashMap<&str, &TensorEntry> = header.tensors.iter().map(|e| (e.name.as_str(), e)).collect();
    {
        let params = graph.parameters_mut();
        let missing: Vec<&str> = params
            .iter()
            .map(|p| p.name.as_str())
            .filter(|n| !manifest.contains_key(n))
            .collect();
        if let Some(first) = missing.first() {
            return Err(WeightsError::MissingTensor {
                first: first.to_string(),
                count: missing.len(),
            });
        }
        let known: HashSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
        let extra: Vec<String> = header
            .tensors
            .iter()
            .filter(|e| !known.contains(e.name.as_str()))
            .map(|e| e.name.clone())
            .collect();
        if !extra.is_empty() {
            return Err(WeightsError::UnexpectedTensors(extra));
        }
        for p in params {
            let e = manifest[p.name.as_str()];
            if e.shape != p.shape {
                return Err(WeightsError::ShapeMismatch {
                    name: p.name,
                    expected: p.shape,
                    found: e.shape.clone(),
                });
            }
            let data = tensor_data(payload, e);
            if p.name.ends_with(".var") && data.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(WeightsError::NegativeVariance(p.name));
            }
            p.data.copy_from_slice(&data);
        }
    }
    Ok(graph)
}

pub fn save_model(g: &ModelGraph, path: &Path) -> Result<()> {
    write_file(path, &encode_model(g))
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    decode_model(&read_file(path)?)
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let refs: Vec<(&str, &[usize], &[f32])> = tensors
        .iter()
        .map(|t| (t.name.as_str(), t.shape.as_slice(), t.data.as_slice()))
        .collect();
    let header = Header {
        kind: FileKind::Tensors,
        config: None,
        mode: None,
        tensors: Vec::new(),
    };
    encode(header, &refs)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let (header, payload) = read_header(bytes)?;
    if header.kind != FileKind::Tensors {
        return Err(WeightsError::Kind {
            expected: FileKind::Tensors,
            found: header.kind,
        });
    }
    Ok(header
        .tensors
        .iter()
        .map(|e| NamedTensor::new(e.name.clone(), e.shape.clone(), tensor_data(payload, e)))
        .collect())
}

pub fn save_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    write_file(path, &encode_tensors(tensors))
}

pub fn load_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    decode_tensors(&read_file(path)?)
}

/// Header of a file on disk, for inspection without loading the payload
/// into a graph.
pub fn peek_header(path: &Path) -> Result<Header> {
    Ok(read_header(&read_file(path)?)?.0)
}

/// Cross-runtime fixture stored as a tensors file: `input` holds a
/// spectrogram batch `(n, 1, frames, mels)` and `logits` the reference
/// scores `(n, classes)` computed by another implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub input: Tensor4<f32>,
    pub logits: Vec<f32>,
    pub classes: usize,
}

impl Probe {
    pub const INPUT: &'static str = "input";
    pub const LOGITS: &'static str = "logits";

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| WeightsError::MissingTensor {
                    first: name.to_string(),
                    count: 1,
                })
        };
        let input = find(Self::INPUT)?.to_tensor4()?;
        let logits = find(Self::LOGITS)?;
        let classes = match logits.shape.as_slice() {
            [n, c] if *n == input.shape().n => *c,
            other => {
                return Err(WeightsError::ShapeMismatch {
                    name: Self::LOGITS.into(),
                    expected: vec![input.shape().n, 0],
                    found: other.to_vec(),
                })
            }
        };
        Ok(Self {
            input,
            logits: logits.data.clone(),
            classes,
        })
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        vec![
            NamedTensor::from_tensor(Self::INPUT, &self.input),
            NamedTensor::new(
                Self::LOGITS,
                vec![self.input.shape().n, self.classes],
                self.logits.clone(),
            ),
        ]
    }

    /// Largest absolute difference between `g`'s logits on the probe input
    /// and the stored reference.
    pub fn max_abs_diff(&self, g: &ModelGraph) -> Result<f64> {
        let out = g.forward(&self.input)?;
        if out.shape() != (self.input.shape().n, self.classes) {
            return Err(WeightsError::ShapeMismatch {
                name: Self::LOGITS.into(),
                expected: vec![out.shape().0, out.shape().1],
                found: vec![self.input.shape().n, self.classes],
            });
        }
        Ok(out
            .data()
            .iter()
            .zip(&self.logits)
            .fold(0.0, |m, (a, b)| m.max((*a as f64 - *b as f64).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch_header(bytes: &[u8], f: impl FnOnce(&mut Header)) -> Vec<u8> {
        let (mut header, payload) = read_header(bytes).unwrap();
        f(&mut header);
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(payload);
        out
    }

    fn sample() -> Vec<u8> {
        encode_tensors(&[
            NamedTensor::new("a", vec![2, 3], (0..6).map(|v| v as f32).collect()),
            NamedTensor::new("b", vec![4], vec![-1.0, 0.5, 1e-30, f32::MAX]),
        ])
    }

    #[test]
    fn tensors_round_trip() {
        let t = decode_tensors(&sample()).unwrap();
        assert_eq!(t[0].shape, [2, 3]);
        assert_eq!(t[1].data, [-1.0, 0.5, 1e-30, f32::MAX]);
    }

    #[test]
    fn payload_is_aligned() {
        let bytes = sample();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!((PREAMBLE + header_len) % 8, 0);
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = sample();
        bytes[0] = b'X';
        let err = decode_tensors(&bytes).unwrap_err();
        assert!(err.to_string().contains("not a weight file"));
    }

    #[test]
    fn newer_version_refused() {
        let mut bytes = sample();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_tensors(&bytes),
            Err(WeightsError::UnsupportedVersion { found: 2 })
        ));
    }

    #[test]
    fn tensor_past_end_names_tensor() {
        let bytes = patch_header(&sample(), |h| h.tensors[1].byte_offset = 40);
        let err = decode_tensors(&bytes).unwrap_err();
        assert!(matches!(&err, WeightsError::OutOfBounds { name, .. } if name == "b"));
        assert!(err.to_string().contains("'b'"));
    }

    #[test]
    fn misaligned_overlapping_and_wrong_dtype() {
        let bytes = patch_header(&sample(), |h| h.tensors[1].byte_offset = 22);
        assert!(matches!(decode_tensors(&bytes), Err(WeightsError::Misaligned { .. })));
        let bytes = patch_header(&sample(), |h| h.tensors[1].byte_offset = 20);
        assert!(matches!(decode_tensors(&bytes), Err(WeightsError::Overlap { .. })));
        let bytes = patch_header(&sample(), |h| h.tensors[0].dtype = "f16".into());
        assert!(matches!(decode_tensors(&bytes), Err(WeightsError::Dtype { .. })));
        let bytes = patch_header(&sample(), |h| h.tensors[0].byte_length = 20);
        assert!(matches!(decode_tensors(&bytes), Err(WeightsError::Length { .. })));
    }

    #[test]
    fn truncated_payload() {
        let bytes = sample();
        assert!(matches!(
            decode_tensors(&bytes[..bytes.len() - 4]),
            Err(WeightsError::OutOfBounds { .. })
        ));
        assert!(matches!(decode_tensors(&bytes[..10]), Err(WeightsError::Truncated(_))));
    }

    #[test]
    fn kind_is_checked() {
        assert!(matches!(decode_model(&sample()), Err(WeightsError::Kind { .. })));
    }
}
