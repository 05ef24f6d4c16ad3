//! Dense rank-4 tensors and the neural-network primitives the model needs.
//!
//! Activations use batch–channel–time–frequency layout: `h` is the time axis
//! and `w` the frequency axis, with `w` fastest in memory.

mod conv;
mod ops;
mod scalar;
mod spec;

use std::fmt;

use rand::Rng;

pub use conv::{conv2d, conv2d_reference, conv_output_extent};
pub use ops::{add, batch_norm, global_avg_pool, linear, max_pool2d, relu};
pub(crate) use ops::{add_assign, batch_norm_inplace, relu_inplace};
pub use scalar::Scalar;
pub use spec::{BnSpec, ConvSpec, LinearSpec, DEFAULT_BN_EPS};

/// Tensor axis, used to name the offending dimension in shape errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Batch,
    Channel,
    Height,
    Width,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Batch => "batch",
            Axis::Channel => "channel",
            Axis::Height => "height (time)",
            Axis::Width => "width (frequency)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: {axis} mismatch (expected {expected}, got {actual})")]
    Dimension {
        op: &'static str,
        axis: Axis,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: shapes {left} and {right} differ")]
    ShapeMismatch {
        op: &'static str,
        left: Shape4,
        right: Shape4,
    },
    #[error("data length {actual} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape4,
        expected: usize,
        actual: usize,
    },
    #[error("tensor dimensions must be at least 1, got {0}")]
    ZeroDimension(Shape4),
    #[error("{op}: kernel extent {kernel} along {axis} exceeds padded input extent {padded}")]
    KernelTooLarge {
        op: &'static str,
        axis: Axis,
        kernel: usize,
        padded: usize,
    },
    #[error("invalid layer parameters: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Extents of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let shape = Shape4 { n, c, h, w };
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(TensorError::ZeroDimension(shape));
        }
        Ok(shape)
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}×{}×{}×{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array, row-major with `w` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(shape: Shape4, data: Vec<T>) -> Result<Self> {
        let shape = Shape4::new(shape.n, shape.c, shape.h, shape.w)?;
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength {
                shape,
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_dims(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        Self::new(Shape4::new(dims[0], dims[1], dims[2], dims[3])?, data)
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self::filled(shape, T::ZERO)
    }

    pub fn filled(shape: Shape4, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    /// Samples every element independently from `U(lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: Shape4, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..shape.numel())
            .map(|_| T::from_f32(rng.random_range(lo..hi)))
            .collect();
        Self { shape, data }
    }

    /// Uniform values from a ChaCha8 stream seeded with `seed`.
    pub fn seeded_uniform(shape: Shape4, lo: f32, hi: f32, seed: u64) -> Self {
        use rand::SeedableRng;
        Self::random_uniform(shape, lo, hi, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + h) * s.w + w]
    }

    /// The `h × w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Row `n` of a tensor viewed as `n × (c·h·w)`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape.c * self.shape.plane();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Largest elementwise absolute difference, evaluated in f64.
    pub fn max_abs_diff(&self, other: &Tensor4<T>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
    }
}
