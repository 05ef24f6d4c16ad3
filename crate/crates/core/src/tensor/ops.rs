use super::conv::conv_output_extent;
use super::{Axis, BnSpec, LinearSpec, Result, Scalar, Shape4, Tensor4, TensorError};

fn check_channels<T: Scalar>(op: &'static str, x: &Tensor4<T>, expected: usize) -> Result<()> {
    if x.shape().c != expected {
        return Err(TensorError::Dimension {
            op,
            axis: Axis::Channel,
            expected,
            actual: x.shape().c,
        });
    }
    Ok(())
}

/// Inference-mode batch normalization using running statistics:
/// `(x − μ)·α/σ + β` with `σ = sqrt(var + eps)`.
pub fn batch_norm<T: Scalar>(x: &Tensor4<T>, bn: &BnSpec) -> Result<Tensor4<T>> {
    let mut y = x.clone();
    batch_norm_inplace(&mut y, bn)?;
    Ok(y)
}

pub(crate) fn batch_norm_inplace<T: Scalar>(x: &mut Tensor4<T>, bn: &BnSpec) -> Result<()> {
    check_channels("batch_norm", x, bn.channels())?;
    let s = x.shape();
    let plane = s.plane();
    let params: Vec<(T, T, T)> = (0..bn.channels())
        .map(|j| {
            let sigma = (bn.var()[j] as f64 + bn.eps() as f64).sqrt();
            (
                T::from_f32(bn.mean()[j]),
                T::from_f64(bn.gamma()[j] as f64 / sigma),
                T::from_f32(bn.beta()[j]),
            )
        })
        .collect();
    for (i, chunk) in x.data_mut().chunks_mut(plane).enumerate() {
        let (mu, scale, beta) = params[i % s.c];
        chunk.iter_mut().for_each(|v| *v = (*v - mu) * scale + beta);
    }
    Ok(())
}

/// Max pooling; padded cells never win (treated as −∞).
pub fn max_pool2d<T: Scalar>(
    x: &Tensor4<T>,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor4<T>> {
    let s = x.shape();
    if stride.0 == 0 || stride.1 == 0 {
        return Err(TensorError::InvalidSpec("pooling stride must be positive".into()));
    }
    let oh = conv_output_extent("max_pool2d", Axis::Height, s.h, kernel.0, stride.0, padding.0)?;
    let ow = conv_output_extent("max_pool2d", Axis::Width, s.w, kernel.1, stride.1, padding.1)?;
    let os = Shape4::new(s.n, s.c, oh, ow)?;
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let p = x.plane(n, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = T::NEG_INFINITY;
                    for ki in 0..kernel.0 {
                        let iy = (oy * stride.0 + ki) as isize - padding.0 as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kj in 0..kernel.1 {
                            let ix = (ox * stride.1 + kj) as isize - padding.1 as isize;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            m = m.max(p[iy as usize * s.w + ix as usize]);
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor4::new(os, out)
}

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let mut y = x.clone();
    relu_inplace(&mut y);
    y
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut Tensor4<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(T::ZERO));
}

pub fn add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut y = a.clone();
    add_assign(&mut y, b)?;
    Ok(y)
}

pub(crate) fn add_assign<T: Scalar>(a: &mut Tensor4<T>, b: &Tensor4<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "add",
            left: a.shape(),
            right: b.shape(),
        });
    }
    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x += y);
    Ok(())
}

/// Mean over `h` and `w`; output is `(n, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let s = x.shape();
    let inv = T::from_f64(1.0 / s.plane() as f64);
    let data = x
        .data()
        .chunks(s.plane())
        .map(|p| p.iter().fold(T::ZERO, |acc, &v| acc + v) * inv)
        .collect();
    Tensor4 {
        shape: Shape4 {
            n: s.n,
            c: s.c,
            h: 1,
            w: 1,
        },
        data,
    }
}

/// Affine map of each flattened sample; output is `(n, out_features, 1, 1)`.
pub fn linear<T: Scalar>(x: &Tensor4<T>, spec: &LinearSpec) -> Result<Tensor4<T>> {
    let s = x.shape();
    let features = s.c * s.plane();
    if features != spec.in_features() {
        return Err(TensorError::Dimension {
            op: "linear",
            axis: Axis::Channel,
            expected: spec.in_features(),
            actual: features,
        });
    }
    let w = T::cast_params(spec.weight());
    let mut out = Vec::with_capacity(s.n * spec.out_features());
    for n in 0..s.n {
        let row = x.sample(n);
        for (o, wrow) in w.chunks(features).enumerate() {
            let dot = row.iter().zip(wrow).fold(T::ZERO, |acc, (&a, &b)| acc + a * b);
            out.push(dot + T::from_f32(spec.bias()[o]));
        }
    }
    Tensor4::from_dims([s.n, spec.out_features(), 1, 1], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape4 {
        Shape4::new(n, c, h, w).unwrap()
    }

    #[test]
    fn bn_unit_stats_is_identity() {
        let eps = 1e-5;
        let x = Tensor4::from_dims([1, 2, 1, 3], vec![-1.0, 0.5, 2.0, 3.0, -4.0, 0.0]).unwrap();
        let bn = BnSpec::new(vec![0.0; 2], vec![1.0 - eps; 2], vec![1.0; 2], vec![0.0; 2], eps).unwrap();
        let y = batch_norm(&x, &bn).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-7);
    }

    #[test]
    fn bn_zero_gamma_yields_beta() {
        let x = Tensor4::from_dims([2, 1, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let bn = BnSpec::new(vec![3.0], vec![2.0], vec![0.0], vec![5.0], 1e-5).unwrap();
        assert!(batch_norm(&x, &bn).unwrap().data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn bn_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = 5;
        let x = Tensor4::<f32>::random_uniform(shape(3, c, 4, 6), -3.0, 3.0, &mut rng);
        let mut v = |lo: f32, hi: f32| (0..c).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let bn = BnSpec::new(v(-1.0, 1.0), v(0.1, 2.0), v(-2.0, 2.0), v(-1.0, 1.0), 1e-5).unwrap();
        let y = batch_norm(&x, &bn).unwrap();
        for n in 0..3 {
            for j in 0..c {
                for h in 0..4 {
                    for w in 0..6 {
                        let sigma = (bn.var()[j] + bn.eps()).sqrt();
                        let expect = (x.get(n, j, h, w) - bn.mean()[j]) * bn.gamma()[j] / sigma + bn.beta()[j];
                        assert!((y.get(n, j, h, w) - expect).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn bn_channel_mismatch() {
        let x = Tensor4::<f32>::zeros(shape(1, 3, 2, 2));
        assert!(matches!(
            batch_norm(&x, &BnSpec::identity(2, 1e-5)),
            Err(TensorError::Dimension {
                axis: Axis::Channel,
                ..
            })
        ));
    }

    #[test]
    fn pool_constant_and_geometry() {
        let x = Tensor4::filled(shape(1, 1, 256, 64), 2.5f32);
        let y = max_pool2d(&x, (3, 3), (2, 2), (1, 1)).unwrap();
        assert_eq!(y.shape().dims(), [1, 1, 128, 32]);
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn pool_two_by_two() {
        let x = Tensor4::from_dims([1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let y = max_pool2d(&x, (2, 2), (1, 1), (0, 0)).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn pool_padding_never_wins_over_negatives() {
        let x = Tensor4::filled(shape(1, 1, 3, 3), -7.0f32);
        let y = max_pool2d(&x, (3, 3), (2, 2), (1, 1)).unwrap();
        assert!(y.data().iter().all(|&v| v == -7.0));
    }

    #[test]
    fn elementwise_helpers() {
        let x = Tensor4::from_dims([1, 1, 1, 2], vec![-1.0f32, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let z = Tensor4::zeros(x.shape());
        assert_eq!(add(&x, &z).unwrap(), x);
        assert!(add(&x, &Tensor4::zeros(shape(1, 1, 2, 1))).is_err());
        let c = Tensor4::filled(shape(2, 3, 4, 5), 1.25f32);
        let g = global_avg_pool(&c);
        assert_eq!(g.shape().dims(), [2, 3, 1, 1]);
        assert!(g.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn linear_affine_map() {
        let x = Tensor4::from_dims([1, 2, 1, 1], vec![1.0f32, 2.0]).unwrap();
        let spec = LinearSpec::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, -1.0], vec![0.5, 0.0, 1.0], 2, 3).unwrap();
        assert_eq!(linear(&x, &spec).unwrap().data(), &[1.5, 3.0, -1.0]);
    }
}
