//! Inference runtime for the AudioRepInceptionNeXt family of audio CNNs.
//!
//! The pipeline runs from a WAV file through a log-mel spectrogram
//! ([`audio`]) into a network built from a declarative configuration
//! ([`model`]). A multi-branch train-form graph can be rewritten into an
//! equivalent single-branch inference-form graph ([`reparam`]). Costs and
//! throughput are measured by [`metrics`] and graphs persist through
//! [`weights`].

pub mod audio;
pub mod metrics;
pub mod model;
pub mod reparam;
pub mod tensor;
pub mod weights;
