use super::graph::{Block, BranchGroup, ChannelMlp, FusedMixer, IdentityBranch, Mixer, ModelGraph, Shortcut, Stem};
use super::{ModelError, Result};
use crate::tensor::{
    add_assign, batch_norm_inplace, conv2d, global_avg_pool, linear, max_pool2d, relu_inplace, Scalar, Shape4, Tensor4,
    TensorError,
};

/// Unnormalized class scores, one row per batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T = f32> {
    batch: usize,
    classes: usize,
    data: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn new(batch: usize, classes: usize, data: Vec<T>) -> Result<Self, TensorError> {
        if data.len() != batch * classes {
            return Err(TensorError::InvalidSpec(format!(
                "{} logits for a {batch}×{classes} batch",
                data.len()
            )));
        }
        Ok(Self { batch, classes, data })
    }

    /// `(batch, classes)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.batch, self.classes)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.to_f64().abs()))
    }

    pub fn max_abs_diff<U: Scalar>(&self, other: &Logits<U>) -> Result<f64, TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::InvalidSpec(format!(
                "logit shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a.to_f64() - b.to_f64()).abs())))
    }

    /// Indices and scores of the `k` largest logits of row `i`, best first.
    pub fn top_k(&self, i: usize, k: usize) -> Vec<(usize, T)> {
        let mut idx: Vec<usize> = (0..self.classes).collect();
        let row = self.row(i);
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal));
        idx.into_iter().take(k).map(|j| (j, row[j])).collect()
    }
}

impl Stem {
    pub(crate) fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut y = conv2d(x, &self.conv)?;
        if let Some(bn) = &self.bn {
            batch_norm_inplace(&mut y, bn)?;
        }
        relu_inplace(&mut y);
        Ok(y)
    }
}

impl BranchGroup {
    /// Sum of every branch output, the identity included.
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut acc = match &self.identity {
            Some(IdentityBranch::Plain) => x.clone(),
            Some(IdentityBranch::Normalized(bn)) => {
                let mut y = x.clone();
                batch_norm_inplace(&mut y, bn)?;
                y
            }
            None => Tensor4::zeros(x.shape()),
        };
        for b in &self.branches {
            let mut y = conv2d(x, &b.conv)?;
            batch_norm_inplace(&mut y, &b.bn)?;
            add_assign(&mut acc, &y)?;
        }
        Ok(acc)
    }
}

impl FusedMixer {
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(conv2d(x, &self.conv)?)
    }
}

impl Mixer {
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        match self {
            Mixer::Branches(g) => g.forward(x),
            Mixer::Fused(f) => f.forward(x),
        }
    }
}

impl ChannelMlp {
    pub(crate) fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        match &self.expand {
            Some(expand) => {
                let mut h = conv2d(x, expand)?;
                self.activation.apply_inplace(&mut h);
                Ok(conv2d(&h, &self.project)?)
            }
            None => {
                let mut h = conv2d(x, &self.project)?;
                self.activation.apply_inplace(&mut h);
                Ok(h)
            }
        }
    }
}

impl Block {
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut h = conv2d(x, &self.pw_in)?;
        if let Some(bn) = &self.pw_in_bn {
            batch_norm_inplace(&mut h, bn)?;
        }
        for m in &self.mixers {
            h = m.forward(&h)?;
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
    /// Rejects inputs the network cannot take: wrong channel count, or an
    /// extent the stride pyramid does not divide.
    pub fn check_input<T: Scalar>(&self, x: &Tensor4<T>) -> Result<()> {
        self.check_input_shape(x.shape())
    }

    pub fn check_input_shape(&self, s: Shape4) -> Result<()> {
        if s.c != self.config.in_channels {
            return Err(ModelError::InputChannels {
                expected: self.config.in_channels,
                shape: s,
            });
        }
        let (mh, mw) = self.config.reduction();
        if !s.h.is_multiple_of(mh) || !s.w.is_multiple_of(mw) {
            return Err(ModelError::InputExtent {
                shape: s,
                multiple_h: mh,
                multiple_w: mw,
            });
        }
        Ok(())
    }

    fn features<T: Scalar>(&self, x: &Tensor4<T>, mut tap: impl FnMut(&Tensor4<T>)) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let p = &self.config.pool;
        let mut h = max_pool2d(&self.stem.forward(x)?, p.kernel, p.stride, p.padding)?;
        for stage in &self.stages {
            for block in &stage.blocks {
                h = block.forward(&h)?;
            }
            tap(&h);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor4<f32>) -> Result<Logits<f32>> {
        self.forward_as(x)
    }

    /// Forward pass with activations of type `T`; parameters are converted
    /// from `f32` on use.
    pub fn forward_as<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Logits<T>> {
        let h = self.features(x, |_| {})?;
        let y = linear(&global_avg_pool(&h), &self.head)?;
        let (n, classes) = (y.shape().n, y.shape().c);
        Ok(Logits::new(n, classes, y.into_data())?)
    }

    /// Output of every stage, in order.
    pub fn stage_outputs<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let mut outs = Vec::new();
        self.features(x, |h| outs.push(h.clone()))?;
        Ok(outs)
    }
}
