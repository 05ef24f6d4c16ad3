//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's arithmetic; each routine is a direct loop in `f64`.

#![allow(dead_code)]

use arin::tensor::{BnSpec, ConvSpec, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense NCHW array in `f64`.
#[derive(Debug, Clone)]
pub struct Nd {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Nd {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_tensor(t: &Tensor4<f32>) -> Self {
        Self {
            dims: t.shape().dims(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let [_, cc, hh, ww] = self.dims;
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let [_, cc, hh, ww] = self.dims;
        &mut self.data[((n * cc + c) * hh + h) * ww + w]
    }

    pub fn max_abs_diff_f32(&self, t: &Tensor4<f32>) -> f64 {
        assert_eq!(self.dims, t.shape().dims());
        self.data
            .iter()
            .zip(t.data())
            .fold(0.0, |m, (a, &b)| m.max((a - b as f64).abs()))
    }
}

/// Cross-correlation with zero padding, the textbook six-deep loop.
pub fn conv_oracle(
    x: &Nd,
    weight: &Nd,
    bias: Option<&[f32]>,
    stride: (usize, usize),
    pad: (usize, usize),
    groups: usize,
) -> Nd {
    let [n, c_in, h, w] = x.dims;
    let [c_out, cpg, kh, kw] = weight.dims;
    assert_eq!(c_in, cpg * groups);
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - kw) / stride.1 + 1;
    let opg = c_out / groups;
    let mut y = Nd::zeros([n, c_out, oh, ow]);
    for b in 0..n {
        for o in 0..c_out {
            let g = o / opg;
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o] as f64);
                    for ci in 0..cpg {
                        for u in 0..kh {
                            for v in 0..kw {
                                let hi = (i * stride.0 + u) as isize - pad.0 as isize;
                                let wi = (j * stride.1 + v) as isize - pad.1 as isize;
                                if hi < 0 || wi < 0 || hi >= h as isize || wi >= w as isize {
                                    continue;
                                }
                                acc += weight.at(o, ci, u, v) * x.at(b, g * cpg + ci, hi as usize, wi as usize);
                            }
                        }
                    }
                    *y.at_mut(b, o, i, j) = acc;
                }
            }
        }
    }
    y
}

pub fn conv_spec_oracle(x: &Nd, spec: &ConvSpec) -> Nd {
    conv_oracle(
        x,
        &Nd::from_tensor(spec.weight()),
        spec.bias(),
        spec.stride(),
        spec.padding(),
        spec.groups(),
    )
}

/// `γ (x − μ) / √(σ² + ε) + β`, per channel.
pub fn bn_oracle(x: &Nd, bn: &BnSpec) -> Nd {
    let mut y = x.clone();
    let [n, c, h, w] = x.dims;
    for b in 0..n {
        for ch in 0..c {
            let denom = (bn.var()[ch] as f64 + bn.eps() as f64).sqrt();
            for i in 0..h {
                for j in 0..w {
                    let v = y.at_mut(b, ch, i, j);
                    *v = bn.gamma()[ch] as f64 * (*v - bn.mean()[ch] as f64) / denom + bn.beta()[ch] as f64;
                }
            }
        }
    }
    y
}

pub fn add(a: &Nd, b: &Nd) -> Nd {
    assert_eq!(a.dims, b.dims);
    Nd {
        dims: a.dims,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    }
}

pub fn random_bn(rng: &mut ChaCha8Rng, c: usize) -> BnSpec {
    let mut v = |lo: f32, hi: f32| (0..c).map(|_| rng.random_range(lo..hi)).collect::<Vec<f32>>();
    let mean = v(-0.5, 0.5);
    let var = v(0.5, 2.0);
    let gamma = v(0.5, 1.5);
    let beta = v(-0.5, 0.5);
    BnSpec::new(mean, var, gamma, beta, 1e-5).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
