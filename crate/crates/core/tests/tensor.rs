mod common;

use arin::tensor::{batch_norm, conv2d, conv2d_reference, max_pool2d, ConvSpec, Shape4, Tensor4};
use common::{bn_oracle, conv_oracle, conv_spec_oracle, random_bn, rng, Nd};
use proptest::prelude::*;

#[allow(clippy::too_many_arguments)]
fn spec(
    c_out: usize,
    cpg: usize,
    k: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
    groups: usize,
    seed: u64,
    bias: bool,
) -> ConvSpec {
    let w = Tensor4::<f32>::seeded_uniform(Shape4::new(c_out, cpg, k.0, k.1).unwrap(), -1.0, 1.0, seed);
    let b = bias
        .then(|| Tensor4::<f32>::seeded_uniform(Shape4::new(1, c_out, 1, 1).unwrap(), -1.0, 1.0, seed + 1).into_data());
    ConvSpec::new(w, b, stride, pad, groups).unwrap()
}

prop_compose! {
    fn conv_case()(
        groups in 1usize..4,
        cpg in 1usize..3,
        opg in 1usize..3,
        kh in 1usize..6,
        kw in 1usize..6,
        sh in 1usize..3,
        sw in 1usize..3,
        ph in 0usize..3,
        pw in 0usize..3,
        h in 6usize..12,
        w in 6usize..12,
        n in 1usize..3,
        bias in any::<bool>(),
        seed in 0u64..1000,
    ) -> (Tensor4<f32>, ConvSpec) {
        let x = Tensor4::<f32>::seeded_uniform(Shape4::new(n, groups * cpg, h, w).unwrap(), -1.0, 1.0, seed + 7);
        (x, spec(groups * opg, cpg, (kh, kw), (sh, sw), (ph, pw), groups, seed, bias))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_conv_matches_loop_oracle((x, s) in conv_case()) {
        let oracle = conv_spec_oracle(&Nd::from_tensor(&x), &s);
        prop_assert!(oracle.max_abs_diff_f32(&conv2d(&x, &s).unwrap()) <= 1e-5);
        prop_assert!(oracle.max_abs_diff_f32(&conv2d_reference(&x, &s).unwrap()) <= 1e-5);
    }

    #[test]
    fn fast_conv_matches_reference((x, s) in conv_case()) {
        let a = conv2d(&x, &s).unwrap();
        let b = conv2d_reference(&x, &s).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-5);
    }

    #[test]
    fn conv_is_linear_in_input((x, s) in conv_case(), a in -2.0f32..2.0, b in -2.0f32..2.0, seed in 0u64..100) {
        let s = ConvSpec::new(s.weight().clone(), None, s.stride(), s.padding(), s.groups()).unwrap();
        let y = Tensor4::<f32>::seeded_uniform(x.shape(), -1.0, 1.0, seed);
        let mix = Tensor4::<f32>::new(x.shape(), x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = conv2d(&mix, &s).unwrap();
        let (cx, cy) = (conv2d(&x, &s).unwrap(), conv2d(&y, &s).unwrap());
        let rhs = Tensor4::<f32>::new(lhs.shape(), cx.data().iter().zip(cy.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-5 * (1.0 + a.abs().max(b.abs()) as f64) * 4.0);
    }

    #[test]
    fn depthwise_is_per_channel(c in 1usize..6, k in prop::sample::select(vec![1usize, 3, 5, 7]), seed in 0u64..500) {
        let x = Tensor4::<f32>::seeded_uniform(Shape4::new(1, c, 9, 9).unwrap(), -1.0, 1.0, seed);
        let s = spec(c, 1, (k, 1), (1, 1), ((k - 1) / 2, 0), c, seed + 3, true);
        let y = conv2d(&x, &s).unwrap();
        for ch in 0..c {
            let xc = Nd { dims: [1, 1, 9, 9], data: x.plane(0, ch).iter().map(|&v| v as f64).collect() };
            let wc = Nd { dims: [1, 1, k, 1], data: s.weight().sample(ch).iter().map(|&v| v as f64).collect() };
            let yc = conv_oracle(&xc, &wc, Some(&s.bias().unwrap()[ch..=ch]), (1, 1), ((k - 1) / 2, 0), 1);
            let got = y.plane(0, ch);
            let diff = yc.data.iter().zip(got).fold(0.0f64, |m, (a, &b)| m.max((a - b as f64).abs()));
            prop_assert!(diff <= 1e-6, "channel {ch}: {diff}");
        }
    }
}

#[test]
fn batch_norm_matches_formula() {
    let mut r = rng(4);
    let bn = random_bn(&mut r, 5);
    let x = Tensor4::<f32>::seeded_uniform(Shape4::new(2, 5, 4, 3).unwrap(), -3.0, 3.0, 1);
    let d = bn_oracle(&Nd::from_tensor(&x), &bn).max_abs_diff_f32(&batch_norm(&x, &bn).unwrap());
    assert!(d <= 1e-5, "{d}");
}

#[test]
fn max_pool_picks_window_maximum() {
    let x = Tensor4::from_dims([1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
    let y = max_pool2d(&x, (3, 3), (2, 2), (1, 1)).unwrap();
    assert_eq!(y.shape().dims(), [1, 1, 2, 2]);
    assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
}

#[test]
fn f64_conv_is_tighter_than_f32() {
    let x = Tensor4::<f32>::seeded_uniform(Shape4::new(1, 8, 16, 16).unwrap(), -1.0, 1.0, 2);
    let s = spec(8, 8, (3, 3), (1, 1), (1, 1), 1, 5, true);
    let oracle = conv_spec_oracle(&Nd::from_tensor(&x), &s);
    let y64 = conv2d(&x.cast::<f64>(), &s).unwrap();
    let d64 = oracle
        .data
        .iter()
        .zip(y64.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(d64 <= 1e-12, "{d64}");
}
