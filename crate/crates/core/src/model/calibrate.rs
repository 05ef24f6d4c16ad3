//! Running-statistics calibration for freshly initialized train-form graphs.
//!
//! With unit running statistics a randomly initialized network amplifies its
//! activations block after block. Setting every batch norm's mean and
//! variance from the activations it actually sees on a calibration batch
//! keeps logits at a usable scale.

use super::graph::{Block, BranchGroup, IdentityBranch, Mixer, ModelGraph, Shortcut};
use super::{Mode, ModelError, Result};
use crate::tensor::{add_assign, batch_norm_inplace, conv2d, max_pool2d, relu_inplace, BnSpec, Tensor4};

/// Sets `bn`'s running statistics to the per-channel population mean and
/// variance of `x`, then normalizes `x` in place.
fn observe(bn: &mut BnSpec, x: &mut Tensor4<f32>) -> Result<()> {
    let s = x.shape();
    if s.c != bn.channels() {
        return Err(crate::tensor::TensorError::Dimension {
            op: "calibrate",
            axis: crate::tensor::Axis::Channel,
            expected: bn.channels(),
            actual: s.c,
        }
        .into());
    }
    let count = (s.n * s.plane()) as f64;
    for j in 0..s.c {
        let (mut sum, mut sq) = (0.0f64, 0.0f64);
        for n in 0..s.n {
            for &v in x.plane(n, j) {
                sum += v as f64;
                sq += v as f64 * v as f64;
            }
        }
        let mean = sum / count;
        bn.mean[j] = mean as f32;
        bn.var[j] = (sq / count - mean * mean).max(0.0) as f32;
    }
    batch_norm_inplace(x, bn)?;
    Ok(())
}

impl BranchGroup {
    fn calibrate(&mut self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let mut acc = match &mut self.identity {
            Some(IdentityBranch::Plain) => x.clone(),
            Some(IdentityBranch::Normalized(bn)) => {
                let mut y = x.clone();
                observe(bn, &mut y)?;
                y
            }
            None => Tensor4::zeros(x.shape()),
        };
        for b in &mut self.branches {
            let mut y = conv2d(x, &b.conv)?;
            observe(&mut b.bn, &mut y)?;
            add_assign(&mut acc, &y)?;
        }
        Ok(acc)
    }
}

impl Block {
    /// Calibrates this block's batch norms on `x` and returns the block output.
    pub fn calibrate_bn(&mut self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let mut h = conv2d(x, &self.pw_in)?;
        if let Some(bn) = &mut self.pw_in_bn {
            observe(bn, &mut h)?;
        }
        for m in &mut self.mixers {
            h = match m {
                Mixer::Branches(g) => g.calibrate(&h)?,
                Mixer::Fused(f) => f.forward(&h)?,
            };
        }
        let mut y = self.mlp.forward(&h)?;
        match &self.shortcut {
            Shortcut::None => {}
            Shortcut::Identity => add_assign(&mut y, x)?,
            Shortcut::Projection(p) => add_assign(&mut y, &conv2d(x, p)?)?,
        }
        Ok(y)
    }
}

impl ModelGraph {
    /// Replaces every batch norm's running statistics with those observed on
    /// the calibration batch `x`. Affine terms are left untouched.
    pub fn calibrate_bn(&mut self, x: &Tensor4<f32>) -> Result<()> {
        if self.mode != Mode::Train {
            return Err(ModelError::WrongMode {
                expected: Mode::Train,
                actual: self.mode,
            });
        }
        self.check_input(x)?;
        let mut h = conv2d(x, &self.stem.conv)?;
        if let Some(bn) = &mut self.stem.bn {
            observe(bn, &mut h)?;
        }
        relu_inplace(&mut h);
        let p = &self.config.pool;
        h = max_pool2d(&h, p.kernel, p.stride, p.padding)?;
        for stage in &mut self.stages {
            for block in &mut stage.blocks {
                h = block.calibrate_bn(&h)?;
            }
        }
        Ok(())
    }
}
