use super::{Result, Tensor4, TensorError};

pub const DEFAULT_BN_EPS: f32 = 1e-5;

/// Convolution parameters. The weight is shaped
/// `(c_out, c_in / groups, k_h, k_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub(crate) weight: Tensor4<f32>,
    pub(crate) bias: Option<Vec<f32>>,
    stride: (usize, usize),
    padding: (usize, usize),
    groups: usize,
}

impl ConvSpec {
    pub fn new(
        weight: Tensor4<f32>,
        bias: Option<Vec<f32>>,
        stride: (usize, usize),
        padding: (usize, usize),
        groups: usize,
    ) -> Result<Self> {
        let c_out = weight.shape().n;
        if groups == 0 || !c_out.is_multiple_of(groups) {
            return Err(TensorError::InvalidSpec(format!(
                "{c_out} output channels are not divisible into {groups} groups"
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(TensorError::InvalidSpec("stride must be positive".into()));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(TensorError::InvalidSpec(format!(
                    "bias has {} entries for {c_out} output channels",
                    b.len()
                )));
            }
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            groups,
        })
    }

    /// Stride-1 convolution whose odd kernel preserves spatial extent.
    pub fn same(weight: Tensor4<f32>, bias: Option<Vec<f32>>, groups: usize) -> Result<Self> {
        let s = weight.shape();
        if s.h.is_multiple_of(2) || s.w.is_multiple_of(2) {
            return Err(TensorError::InvalidSpec(format!(
                "kernel {}×{} has no center; same padding needs odd extents",
                s.h, s.w
            )));
        }
        Self::new(weight, bias, (1, 1), ((s.h - 1) / 2, (s.w - 1) / 2), groups)
    }

    pub fn weight(&self) -> &Tensor4<f32> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn padding(&self) -> (usize, usize) {
        self.padding
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape().c * self.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s.h, s.w)
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.c_in() && self.groups == self.c_out()
    }

    pub fn param_count(&self) -> usize {
        self.weight.shape().numel() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

/// Inference-mode batch normalization: running statistics plus learned
/// affine parameters, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BnSpec {
    pub(crate) mean: Vec<f32>,
    pub(crate) var: Vec<f32>,
    pub(crate) gamma: Vec<f32>,
    pub(crate) beta: Vec<f32>,
    eps: f32,
}

impl BnSpec {
    pub fn new(mean: Vec<f32>, var: Vec<f32>, gamma: Vec<f32>, beta: Vec<f32>, eps: f32) -> Result<Self> {
        let c = mean.len();
        if var.len() != c || gamma.len() != c || beta.len() != c {
            return Err(TensorError::InvalidSpec(format!(
                "batch-norm vectors differ in length (mean {c}, var {}, gamma {}, beta {})",
                var.len(),
                gamma.len(),
                beta.len()
            )));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(TensorError::InvalidSpec(format!(
                "batch-norm eps must be positive, got {eps}"
            )));
        }
        if let Some(v) = var.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(TensorError::InvalidSpec(format!("negative running variance {v}")));
        }
        Ok(Self {
            mean,
            var,
            gamma,
            beta,
            eps,
        })
    }

    /// `μ = 0, var = 1, α = 1, β = 0`.
    pub fn identity(channels: usize, eps: f32) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn var(&self) -> &[f32] {
        &self.var
    }

    pub fn gamma(&self) -> &[f32] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f32] {
        &self.beta
    }

    pub fn eps(&self) -> f32 {
        self.eps
    }

    /// Per-channel `(α/σ, β − μ·α/σ)` with `σ = sqrt(var + eps)`, in f64.
    pub fn scale_shift(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.channels())
            .map(|j| {
                let sigma = (self.var[j] as f64 + self.eps as f64).sqrt();
                let scale = self.gamma[j] as f64 / sigma;
                (scale, self.beta[j] as f64 - self.mean[j] as f64 * scale)
            })
            .unzip()
    }

    /// Learnable parameters only (γ and β); running statistics are buffers.
    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }
}

/// Fully connected layer with row-major `out × in` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpec {
    pub(crate) weight: Vec<f32>,
    pub(crate) bias: Vec<f32>,
    in_features: usize,
    out_features: usize,
}

impl LinearSpec {
    pub fn new(weight: Vec<f32>, bias: Vec<f32>, in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(TensorError::InvalidSpec("linear layer needs non-zero extents".into()));
        }
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(TensorError::InvalidSpec(format!(
                "linear {in_features}→{out_features} got weight {} and bias {}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
