//! Structural reparameterization: folds every batch norm into the preceding
//! convolution, embeds each branch kernel center-aligned in the largest
//! kernel of its group and sums them, and turns identity branches into Dirac
//! kernels. The result computes the same function with one depthwise
//! convolution per group.
//!
//! Folding is computed in `f64` from the stored `f32` parameters and rounded
//! once per folded tensor; merged sums are accumulated in `f64` and rounded
//! once.

use thiserror::Error;

use crate::model::{Block, BranchGroup, FusedMixer, IdentityBranch, Mixer, Mode, ModelError, ModelGraph, Stem};
use crate::tensor::{BnSpec, ConvSpec, Shape4, Tensor4, TensorError};

#[derive(Debug, Error)]
pub enum ReparamError {
    #[error("graph is already reparameterized (inference form)")]
    AlreadyReparameterized,
    #[error("branches need to have the same stride (1, 1); found {0:?}")]
    StrideMismatch((usize, usize)),
    #[error("kernel parity mismatch: {from:?} cannot be centered in {to:?}")]
    ParityMismatch { from: (usize, usize), to: (usize, usize) },
    #[error("cannot pad kernel {from:?} down to the smaller target {to:?}")]
    TargetTooSmall { from: (usize, usize), to: (usize, usize) },
    #[error("convolution has {conv} output channels but batch norm has {bn}")]
    ChannelMismatch { conv: usize, bn: usize },
    #[error("branch group has neither branches nor an identity")]
    EmptyGroup,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ReparamError> = std::result::Result<T, E>;

/// Merged weight and bias. The weight keeps the convolution layout
/// `(c_out, c_in / groups, k_h, k_w)`; merged groups are depthwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedKernel {
    pub weight: Tensor4<f32>,
    pub bias: Vec<f32>,
}

impl FusedKernel {
    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s.h, s.w)
    }

    pub fn channels(&self) -> usize {
        self.bias.len()
    }

    /// Biased convolution with the given geometry.
    pub fn into_conv(self, stride: (usize, usize), padding: (usize, usize), groups: usize) -> Result<ConvSpec> {
        Ok(ConvSpec::new(self.weight, Some(self.bias), stride, padding, groups)?)
    }

    /// Stride-1, extent-preserving depthwise convolution.
    pub fn into_depthwise(self) -> Result<ConvSpec> {
        let c = self.channels();
        Ok(ConvSpec::same(self.weight, Some(self.bias), c)?)
    }
}

/// `W̄ = (α/σ)·W`, `b̄ = β − μ·α/σ` (plus `(α/σ)·b` when the convolution
/// has a bias), with `σ = sqrt(var + eps)`.
pub fn fold_bn(conv: &ConvSpec, bn: &BnSpec) -> Result<FusedKernel> {
    let c = conv.c_out();
    if bn.channels() != c {
        return Err(ReparamError::ChannelMismatch {
            conv: c,
            bn: bn.channels(),
        });
    }
    let (scale, shift) = bn.scale_shift();
    let per_out = conv.weight().shape().numel() / c;
    let weight: Vec<f32> = conv
        .weight()
        .data()
        .chunks(per_out)
        .zip(&scale)
        .flat_map(|(w, &s)| w.iter().map(move |&v| (s * v as f64) as f32))
        .collect();
    let bias = (0..c)
        .map(|j| {
            let b = conv.bias().map_or(0.0, |b| b[j] as f64);
            (shift[j] + scale[j] * b) as f32
        })
        .collect();
    Ok(FusedKernel {
        weight: Tensor4::new(conv.weight().shape(), weight)?,
        bias,
    })
}

fn check_pad(from: (usize, usize), to: (usize, usize)) -> Result<()> {
    if to.0 < from.0 || to.1 < from.1 {
        return Err(ReparamError::TargetTooSmall { from, to });
    }
    if !(to.0 - from.0).is_multiple_of(2) || !(to.1 - from.1).is_multiple_of(2) {
        return Err(ReparamError::ParityMismatch { from, to });
    }
    Ok(())
}

/// Embeds the kernel center-aligned in a zero kernel of extent `target`.
pub fn pad_to(kernel: &FusedKernel, target: (usize, usize)) -> Result<FusedKernel> {
    let from = kernel.kernel();
    check_pad(from, target)?;
    let s = kernel.weight.shape();
    let (oy, ox) = ((target.0 - from.0) / 2, (target.1 - from.1) / 2);
    let out_shape = Shape4::new(s.n, s.c, target.0, target.1)?;
    let mut data = vec![0.0f32; out_shape.numel()];
    for (dst, src) in data
        .chunks_mut(target.0 * target.1)
        .zip(kernel.weight.data().chunks(from.0 * from.1))
    {
        for i in 0..from.0 {
            dst[(i + oy) * target.1 + ox..][..from.1].copy_from_slice(&src[i * from.1..][..from.1]);
        }
    }
    Ok(FusedKernel {
        weight: Tensor4::new(out_shape, data)?,
        bias: kernel.bias.clone(),
    })
}

/// Depthwise kernel with 1.0 at the center of each channel's filter.
pub fn dirac(channels: usize, kernel: (usize, usize)) -> Result<Tensor4<f32>> {
    if kernel.0.is_multiple_of(2) || kernel.1.is_multiple_of(2) {
        return Err(ReparamError::ParityMismatch {
            from: (1, 1),
            to: kernel,
        });
    }
    let shape = Shape4::new(channels, 1, kernel.0, kernel.1)?;
    let mut data = vec![0.0; shape.numel()];
    let center = (kernel.0 / 2) * kernel.1 + kernel.1 / 2;
    data.chunks_mut(kernel.0 * kernel.1).for_each(|k| k[center] = 1.0);
    Ok(Tensor4::new(shape, data)?)
}

/// Folds one group into a single depthwise kernel of the group's largest
/// extent. Each branch is BN-folded and padded; the padded kernels and
/// biases are summed in `f64`.
pub fn merge_group(group: &BranchGroup) -> Result<FusedKernel> {
    let c = group.channels();
    if c == 0 {
        return Err(ReparamError::EmptyGroup);
    }
    let target = group.max_kernel();
    let mut parts = Vec::with_capacity(group.branches().len() + 1);
    for b in group.branches() {
        if b.conv().stride() != (1, 1) {
            return Err(ReparamError::StrideMismatch(b.conv().stride()));
        }
        parts.push(pad_to(&fold_bn(b.conv(), b.bn())?, target)?);
    }
    match group.identity() {
        Some(IdentityBranch::Plain) => parts.push(FusedKernel {
            weight: dirac(c, target)?,
            bias: vec![0.0; c],
        }),
        Some(IdentityBranch::Normalized(bn)) => {
            let conv = ConvSpec::same(dirac(c, (1, 1))?, None, c)?;
            parts.push(pad_to(&fold_bn(&conv, bn)?, target)?);
        }
        None => {}
    }
    let first = parts.first().ok_or(ReparamError::EmptyGroup)?;
    let mut weight = vec![0.0f64; first.weight.data().len()];
    let mut bias = vec![0.0f64; c];
    for p in &parts {
        weight
            .iter_mut()
            .zip(p.weight.data())
            .for_each(|(acc, &v)| *acc += v as f64);
        bias.iter_mut().zip(&p.bias).for_each(|(acc, &v)| *acc += v as f64);
    }
    Ok(FusedKernel {
        weight: Tensor4::new(first.weight.shape(), weight.into_iter().map(|v| v as f32).collect())?,
        bias: bias.into_iter().map(|v| v as f32).collect(),
    })
}

fn fold_conv(conv: &ConvSpec, bn: Option<&BnSpec>) -> Result<ConvSpec> {
    match bn {
        None => Ok(conv.clone()),
        Some(bn) => fold_bn(conv, bn)?.into_conv(conv.stride(), conv.padding(), conv.groups()),
    }
}

/// Inference-form copy of one block.
pub fn reparameterize_block(block: &Block) -> Result<Block> {
    let mixers = block
        .mixers()
        .iter()
        .map(|m| match m {
            Mixer::Branches(g) => Ok(Mixer::Fused(FusedMixer {
                orientation: g.orientation(),
                conv: merge_group(g)?.into_depthwise()?,
            })),
            Mixer::Fused(f) => Ok(Mixer::Fused(f.clone())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Block {
        pw_in: fold_conv(block.pw_in(), block.pw_in_bn())?,
        pw_in_bn: None,
        mixers,
        mlp: block.mlp().clone(),
        shortcut: block.shortcut().clone(),
    })
}

/// Inference-form copy of a train-form graph. The input is left unchanged.
pub fn reparameterize(graph: &ModelGraph) -> Result<ModelGraph> {
    if graph.mode() != Mode::Train {
        return Err(ReparamError::AlreadyReparameterized);
    }
    let stem = Stem {
        conv: fold_conv(graph.stem().conv(), graph.stem().bn())?,
        bn: None,
    };
    let stages = graph
        .stages()
        .iter()
        .map(|s| {
            Ok(crate::model::Stage {
                blocks: s.blocks().iter().map(reparameterize_block).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelGraph {
        config: graph.config().clone(),
        mode: Mode::Inference,
        stem,
        stages,
        head: graph.head().clone(),
    })
}
