//! Network configuration, graph construction and the forward pass.
//!
//! A graph exists in one of two forms. The train form keeps every parallel
//! depthwise branch with its own batch norm; the inference form holds a
//! single biased depthwise kernel per branch group (see [`crate::reparam`]).
//!
//! Layout is NCHW with `h` the time axis (frames) and `w` the frequency axis
//! (mel bins).

mod calibrate;
mod config;
mod forward;
mod graph;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Shape4, TensorError};

pub use config::{
    ablation_config, AblationId, Activation, BlockConfig, BranchGroupConfig, MixerConfig, ModelConfig, PoolConfig,
    StageConfig, StemConfig, Variant,
};
pub use forward::Logits;
pub use graph::{
    Block, Branch, BranchGroup, ChannelMlp, FusedMixer, IdentityBranch, Mixer, ModelGraph, Orientation, Param,
    ParamMut, Shortcut, Stage, Stem,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("kernel size {0} is even; branch kernels need a center, use an odd size")]
    EvenKernel(usize),
    #[error(
        "input {shape} has a spatial extent not divisible by {multiple_h}×{multiple_w}; \
         pad or crop the spectrogram in the front end before inference"
    )]
    InputExtent {
        shape: Shape4,
        multiple_h: usize,
        multiple_w: usize,
    },
    #[error("model expects {expected} input channel(s), got input {shape}")]
    InputChannels { expected: usize, shape: Shape4 },
    #[error("operation needs a {expected} graph but this graph is in {actual}")]
    WrongMode { expected: Mode, actual: Mode },
    #[error("unknown ablation structure '{0}' (expected one of s1..s9)")]
    UnknownAblation(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Multi-branch groups with per-branch batch norm.
    Train,
    /// One biased depthwise kernel per group; no batch norm anywhere.
    Inference,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train form",
            Mode::Inference => "inference form",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "train-form" => Ok(Mode::Train),
            "inference" | "inference-form" | "infer" => Ok(Mode::Inference),
            other => Err(ModelError::Config(format!(
                "unknown mode '{other}' (expected train or inference)"
            ))),
        }
    }
}

/// Parameter initialization for [`ModelGraph::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Zero weights and unit batch-norm statistics, to be overwritten by a
    /// weight file.
    Empty,
    /// He-uniform convolutions, `U(±1/√in)` head, batch norm at
    /// `μ = 0, var = 1, α = 1, β = 0`.
    Seeded(u64),
    /// As `Seeded`, but batch-norm statistics, affine terms and biases are
    /// drawn at random too. Used to exercise folding with non-trivial values.
    SeededRandomStats(u64),
}
