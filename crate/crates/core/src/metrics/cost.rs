//! Analytical parameter and multiply–accumulate counts.
//!
//! One MAC counts as one FLOP. A convolution costs
//! `out_h · out_w · c_out · (c_in / groups) · k_h · k_w` per sample and a
//! linear layer `in · out`; batch norm, pooling, activations and additions
//! cost nothing.

use serde::Serialize;

use super::{MetricsError, Result};
use crate::model::{Block, IdentityBranch, Mixer, ModelGraph, Shortcut};
use crate::tensor::{conv_output_extent, Axis, BnSpec, ConvSpec, Shape4};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub input: Shape4,
    pub params: u64,
    pub flops: u64,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    fn from_rows(input: Shape4, rows: Vec<CostRow>) -> Self {
        Self {
            input,
            params: rows.iter().map(|r| r.params).sum(),
            flops: rows.iter().map(|r| r.flops).sum(),
            rows,
        }
    }

    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.params as f64 / 1e6
    }
}

/// Geometry of one convolution, independent of stored weights.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    c_out: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    groups: usize,
    bias: bool,
}

impl From<&ConvSpec> for ConvGeom {
    fn from(c: &ConvSpec) -> Self {
        Self {
            c_in: c.c_in(),
            c_out: c.c_out(),
            kernel: c.kernel(),
            stride: c.stride(),
            padding: c.padding(),
            groups: c.groups(),
            bias: c.bias().is_some(),
        }
    }
}

struct Tally {
    batch: u64,
    rows: Vec<CostRow>,
}

impl Tally {
    fn conv(&mut self, name: String, g: ConvGeom, extent: (usize, usize)) -> Result<(usize, usize)> {
        let oh = conv_output_extent("cost", Axis::Height, extent.0, g.kernel.0, g.stride.0, g.padding.0)?;
        let ow = conv_output_extent("cost", Axis::Width, extent.1, g.kernel.1, g.stride.1, g.padding.1)?;
        let per_out = (g.c_in / g.groups * g.kernel.0 * g.kernel.1) as u64;
        self.rows.push(CostRow {
            name,
            params: g.c_out as u64 * per_out + if g.bias { g.c_out as u64 } else { 0 },
            flops: self.batch * (oh * ow * g.c_out) as u64 * per_out,
        });
        Ok((oh, ow))
    }

    fn bn(&mut self, name: String, channels: usize) {
        self.rows.push(CostRow {
            name,
            params: 2 * channels as u64,
            flops: 0,
        });
    }

    fn bn_spec(&mut self, name: String, bn: Option<&BnSpec>) {
        if let Some(bn) = bn {
            self.bn(name, bn.channels());
        }
    }

    fn linear(&mut self, name: String, inputs: usize, outputs: usize) {
        self.rows.push(CostRow {
            name,
            params: (inputs * outputs + outputs) as u64,
            flops: self.batch * (inputs * outputs) as u64,
        });
    }

    fn block(&mut self, prefix: &str, b: &Block, extent: (usize, usize)) -> Result<(usize, usize)> {
        let inner = self.conv(format!("{prefix}.pw_in"), b.pw_in().into(), extent)?;
        self.bn_spec(format!("{prefix}.pw_in.bn"), b.pw_in_bn());
        for m in b.mixers() {
            let group = format!("{prefix}.{}", m.orientation().name());
            match m {
                Mixer::Branches(g) => {
                    for br in g.branches() {
                        let (kh, kw) = br.conv().kernel();
                        let name = format!("{group}.k{}", kh.max(kw));
                        self.conv(name.clone(), br.conv().into(), inner)?;
                        self.bn(format!("{name}.bn"), br.bn().channels());
                    }
                    if let Some(IdentityBranch::Normalized(bn)) = g.identity() {
                        self.bn(format!("{group}.identity.bn"), bn.channels());
                    }
                }
                Mixer::Fused(f) => {
                    self.conv(format!("{group}.fused"), f.conv().into(), inner)?;
                }
            }
        }
        if let Some(e) = b.mlp().expand() {
            self.conv(format!("{prefix}.mlp.expand"), e.into(), inner)?;
        }
        self.conv(format!("{prefix}.mlp.project"), b.mlp().project().into(), inner)?;
        if let Shortcut::Projection(p) = b.shortcut() {
            self.conv(format!("{prefix}.shortcut"), p.into(), extent)?;
        }
        Ok(inner)
    }
}

/// Per-layer parameters and MACs of `g` at `input`.
pub fn cost_report(g: &ModelGraph, input: Shape4) -> Result<CostReport> {
    g.check_input_shape(input)?;
    let mut t = Tally {
        batch: input.n as u64,
        rows: Vec::new(),
    };
    let mut extent = t.conv("stem.conv".into(), g.stem().conv().into(), (input.h, input.w))?;
    t.bn_spec("stem.bn".into(), g.stem().bn());
    let p = &g.config().pool;
    extent = (
        conv_output_extent("cost", Axis::Height, extent.0, p.kernel.0, p.stride.0, p.padding.0)?,
        conv_output_extent("cost", Axis::Width, extent.1, p.kernel.1, p.stride.1, p.padding.1)?,
    );
    for (i, stage) in g.stages().iter().enumerate() {
        for (j, block) in stage.blocks().iter().enumerate() {
            extent = t.block(&format!("stage{}.block{j}", i + 1), block, extent)?;
        }
    }
    t.linear("head".into(), g.head().in_features(), g.head().out_features());
    Ok(CostReport::from_rows(input, t.rows))
}

/// Learnable parameters (running statistics excluded).
pub fn param_count(g: &ModelGraph) -> u64 {
    g.param_count() as u64
}

/// MACs of one forward pass at `input`.
pub fn flops(g: &ModelGraph, input: Shape4) -> Result<u64> {
    Ok(cost_report(g, input)?.flops)
}

/// A ResNet50 (bottleneck v1.5, stride on the `3×3` layer) adapted to a
/// single-channel spectrogram, described for costing only.
pub fn resnet50_reference(input: Shape4, num_classes: usize) -> Result<CostReport> {
    if input.c != 1 {
        return Err(MetricsError::Config("reference network takes one input channel".into()));
    }
    let mut t = Tally {
        batch: input.n as u64,
        rows: Vec::new(),
    };
    let geom = |c_in, c_out, k: usize, s: usize| ConvGeom {
        c_in,
        c_out,
        kernel: (k, k),
        stride: (s, s),
        padding: ((k - 1) / 2, (k - 1) / 2),
        groups: 1,
        bias: false,
    };
    let mut ext = t.conv("conv1".into(), geom(1, 64, 7, 2), (input.h, input.w))?;
    t.bn("bn1".into(), 64);
    ext = (
        conv_output_extent("cost", Axis::Height, ext.0, 3, 2, 1)?,
        conv_output_extent("cost", Axis::Width, ext.1, 3, 2, 1)?,
    );
    let mut c_in = 64;
    for (i, (&width, &blocks)) in [64usize, 128, 256, 512].iter().zip(&[3usize, 4, 6, 3]).enumerate() {
        for j in 0..blocks {
            let stride = if j == 0 && i > 0 { 2 } else { 1 };
            let name = format!("layer{}.{j}", i + 1);
            let out = width * 4;
            t.conv(format!("{name}.conv1"), geom(c_in, width, 1, 1), ext)?;
            t.bn(format!("{name}.bn1"), width);
            let mid = t.conv(format!("{name}.conv2"), geom(width, width, 3, stride), ext)?;
            t.bn(format!("{name}.bn2"), width);
            t.conv(format!("{name}.conv3"), geom(width, out, 1, 1), mid)?;
            t.bn(format!("{name}.bn3"), out);
            if j == 0 {
                t.conv(format!("{name}.downsample"), geom(c_in, out, 1, stride), ext)?;
                t.bn(format!("{name}.downsample.bn"), out);
            }
            ext = mid;
            c_in = out;
        }
    }
    t.linear("fc".into(), c_in, num_classes);
    Ok(CostReport::from_rows(input, t.rows))
}
