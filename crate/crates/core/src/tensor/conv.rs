//! 2D convolution, cross-correlation convention (no kernel flip), zero padding.

use rayon::prelude::*;

use super::{Axis, ConvSpec, Result, Scalar, Shape4, Tensor4, TensorError};

/// `⌊(input + 2·pad − kernel) / stride⌋ + 1`, or an error when the kernel
/// does not fit the padded input.
pub fn conv_output_extent(
    op: &'static str,
    axis: Axis,
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    let padded = input + 2 * pad;
    if kernel > padded || kernel == 0 {
        return Err(TensorError::KernelTooLarge {
            op,
            axis,
            kernel,
            padded,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

fn output_shape<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec) -> Result<Shape4> {
    let s = x.shape();
    if s.c != spec.c_in() {
        return Err(TensorError::Dimension {
            op: "conv2d",
            axis: Axis::Channel,
            expected: spec.c_in(),
            actual: s.c,
        });
    }
    let (kh, kw) = spec.kernel();
    let (sh, sw) = spec.stride();
    let (ph, pw) = spec.padding();
    let h = conv_output_extent("conv2d", Axis::Height, s.h, kh, sh, ph)?;
    let w = conv_output_extent("conv2d", Axis::Width, s.w, kw, sw, pw)?;
    Shape4::new(s.n, spec.c_out(), h, w)
}

/// Direct seven-loop convolution with one accumulator per output element.
/// Slow; kept as the reference the optimized path is tested against.
pub fn conv2d_reference<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec) -> Result<Tensor4<T>> {
    let out_shape = output_shape(x, spec)?;
    let s = x.shape();
    let w = T::cast_params(spec.weight().data());
    let bias = spec.bias().map(T::cast_params);
    let (kh, kw) = spec.kernel();
    let (sh, sw) = spec.stride();
    let (ph, pw) = spec.padding();
    let cin_g = spec.weight().shape().c;
    let cout_g = spec.c_out() / spec.groups();

    let mut out = Vec::with_capacity(out_shape.numel());
    for n in 0..s.n {
        for oc in 0..out_shape.c {
            let g = oc / cout_g;
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = T::ZERO;
                    for icl in 0..cin_g {
                        let ic = g * cin_g + icl;
                        for ki in 0..kh {
                            let iy = (oy * sh + ki) as isize - ph as isize;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kj in 0..kw {
                                let ix = (ox * sw + kj) as isize - pw as isize;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                let wv = w[((oc * cin_g + icl) * kh + ki) * kw + kj];
                                acc += x.get(n, ic, iy as usize, ix as usize) * wv;
                            }
                        }
                    }
                    if let Some(b) = &bias {
                        acc += b[oc];
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor4::new(out_shape, out)
}

/// Convolution. Pointwise layers run as a matrix product; everything else
/// accumulates one kernel tap at a time over contiguous output rows.
pub fn conv2d<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec) -> Result<Tensor4<T>> {
    let out_shape = output_shape(x, spec)?;
    let mut out = Tensor4::zeros(out_shape);
    if spec.kernel() == (1, 1) && spec.padding() == (0, 0) && spec.groups() == 1 {
        pointwise(x, spec, &mut out);
    } else {
        direct(x, spec, &mut out);
    }
    Ok(out)
}

fn pointwise<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec, out: &mut Tensor4<T>) {
    let s = x.shape();
    let os = out.shape();
    let (sh, sw) = spec.stride();
    let w = T::cast_params(spec.weight().data());
    let bias = spec.bias().map(T::cast_params);
    let plane = os.plane();
    let strided = (sh, sw) != (1, 1);

    out.data_mut()
        .par_chunks_mut(os.c * plane)
        .enumerate()
        .for_each(|(n, dst)| {
            let gathered;
            let src = if strided {
                let mut buf = Vec::with_capacity(s.c * plane);
                for c in 0..s.c {
                    let p = x.plane(n, c);
                    for oy in 0..os.h {
                        let row = &p[oy * sh * s.w..];
                        buf.extend((0..os.w).map(|ox| row[ox * sw]));
                    }
                }
                gathered = buf;
                &gathered[..]
            } else {
                x.sample(n)
            };
            T::gemm(os.c, s.c, plane, &w, src, dst);
            if let Some(b) = &bias {
                for (row, &bv) in dst.chunks_mut(plane).zip(b.iter()) {
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        });
}

/// Output indices `o` in `[lo, hi)` whose input index `o·stride + k − pad`
/// falls inside `[0, len)`.
fn valid_range(out_len: usize, len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    if len + pad < k + 1 {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - k) / stride + 1).min(out_len);
    (lo, hi.max(lo))
}

fn direct<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec, out: &mut Tensor4<T>) {
    let s = x.shape();
    let os = out.shape();
    let w = T::cast_params(spec.weight().data());
    let bias = spec.bias().map(T::cast_params);
    let (kh, kw) = spec.kernel();
    let (sh, sw) = spec.stride();
    let (ph, pw) = spec.padding();
    let cin_g = spec.weight().shape().c;
    let cout_g = spec.c_out() / spec.groups();

    out.data_mut()
        .par_chunks_mut(os.plane())
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, oc) = (idx / os.c, idx % os.c);
            let g = oc / cout_g;
            for icl in 0..cin_g {
                let src = x.plane(n, g * cin_g + icl);
                let taps = &w[(oc * cin_g + icl) * kh * kw..][..kh * kw];
                for ki in 0..kh {
                    let (oy0, oy1) = valid_range(os.h, s.h, sh, ki, ph);
                    for kj in 0..kw {
                        let (ox0, ox1) = valid_range(os.w, s.w, sw, kj, pw);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let v = taps[ki * kw + kj];
                        for oy in oy0..oy1 {
                            let iy = oy * sh + ki - ph;
                            let row_in = &src[iy * s.w..(iy + 1) * s.w];
                            let row_out = &mut dst[oy * os.w + ox0..oy * os.w + ox1];
                            if sw == 1 {
                                let ix0 = ox0 + kj - pw;
                                for (o, &i) in row_out.iter_mut().zip(&row_in[ix0..]) {
                                    *o += v * i;
                                }
                            } else {
                                for (o, ox) in row_out.iter_mut().zip(ox0..ox1) {
                                    *o += v * row_in[ox * sw + kj - pw];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(b) = &bias {
                let bv = b[oc];
                dst.iter_mut().for_each(|v| *v += bv);
            }
        });
}
