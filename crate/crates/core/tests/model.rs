use std::collections::HashSet;

use arin::model::{ablation_config, Init, MixerConfig, Mode, ModelConfig, ModelError, ModelGraph, Variant};
use arin::reparam::reparameterize;
use arin::tensor::{Shape4, Tensor4};

/// Closed-form parameter count written out layer by layer, independent of
/// the graph builder.
fn count_by_hand(cfg: &ModelConfig, mode: Mode) -> usize {
    let train = mode == Mode::Train;
    let c0 = cfg.stem.channels;
    let (kh, kw) = cfg.stem.kernel;
    let mut total = cfg.in_channels * c0 * kh * kw + if train { 2 * c0 } else { c0 };
    let mut c_in = c0;
    for stage in &cfg.stages {
        let b = &stage.block;
        let c = b.channels;
        for j in 0..stage.blocks {
            let stride = if stage.downsample && j == 0 { 2 } else { 1 };
            total += c_in * c + if train { 2 * c } else { c };
            for g in b.mixer.groups() {
                let taps = |k: usize| match b.mixer {
                    MixerConfig::Square(_) => k * k,
                    _ => k,
                };
                if train {
                    total += g.kernel_sizes.iter().map(|&k| c * taps(k) + 2 * c).sum::<usize>();
                    if g.identity && g.identity_bn {
                        total += 2 * c;
                    }
                } else {
                    total += c * taps(g.max_kernel()) + c;
                }
            }
            total += if b.inverted_bottleneck {
                let e = c * b.expansion_ratio;
                c * e + e + e * c + c
            } else {
                c * c + c
            };
            if b.outer_residual && (stride != 1 || c_in != c) {
                total += c_in * c;
            }
            c_in = c;
        }
    }
    total + c_in * cfg.num_classes + cfg.num_classes
}

#[test]
fn param_counts_match_closed_form() {
    let configs = [
        ModelConfig::b0(309),
        ModelConfig::b1(309),
        ModelConfig::b1(309).into_square(),
        ModelConfig::b1(50).with_identity_bn(false),
        ablation_config("s9", 309).unwrap(),
        ablation_config("s7", 10).unwrap(),
    ];
    for cfg in &configs {
        for mode in [Mode::Train, Mode::Inference] {
            let g = ModelGraph::build(cfg, mode, Init::Empty).unwrap();
            assert_eq!(g.param_count(), count_by_hand(cfg, mode), "{:?} {mode}", cfg.variant);
        }
    }
}

#[test]
fn headline_counts() {
    let count = |cfg: &ModelConfig, mode| ModelGraph::build(cfg, mode, Init::Empty).unwrap().param_count();
    assert_eq!(count(&ModelConfig::b1(309), Mode::Train), 11_829_301);
    assert_eq!(count(&ModelConfig::b1(309), Mode::Inference), 11_666_869);
    assert_eq!(count(&ModelConfig::b0(309), Mode::Train), 3_085_493);
    assert_eq!(count(&ModelConfig::b0(309), Mode::Inference), 3_004_277);
    assert_eq!(count(&ModelConfig::b1(309).into_square(), Mode::Train), 13_690_869);
}

#[test]
fn ablation_train_counts() {
    let expected = [
        ("s1", 11_557_429),
        ("s2", 11_617_845),
        ("s3", 11_693_365),
        ("s4", 11_731_125),
        ("s5", 11_791_541),
        ("s6", 11_829_301),
        ("s7", 12_078_517),
        ("s8", 11_814_197),
        ("s9", 3_011_893),
    ];
    for (id, n) in expected {
        let cfg = ablation_config(id, 309).unwrap();
        assert_eq!(cfg.variant, Variant::Custom);
        let g = ModelGraph::build(&cfg, Mode::Train, Init::Empty).unwrap();
        assert_eq!(g.param_count(), n, "{id}");
    }
    assert!(matches!(
        ablation_config("s10", 309),
        Err(ModelError::UnknownAblation(_))
    ));
}

#[test]
fn head_delta_between_class_counts() {
    let a = ModelGraph::build(&ModelConfig::b1(309), Mode::Inference, Init::Empty).unwrap();
    let b = ModelGraph::build(&ModelConfig::b1(44), Mode::Inference, Init::Empty).unwrap();
    assert_eq!(a.param_count() - b.param_count(), 512 * 265 + 265);
}

#[test]
fn stage_shapes_separable_and_square_agree() {
    let x = Tensor4::<f32>::zeros(Shape4::new(1, 1, 256, 128).unwrap());
    let shapes = |cfg: ModelConfig| {
        ModelGraph::build(&cfg, Mode::Inference, Init::Seeded(0))
            .unwrap()
            .stage_outputs(&x)
            .unwrap()
            .iter()
            .map(|t| t.shape().dims())
            .collect::<Vec<_>>()
    };
    let sep = shapes(ModelConfig::b0(10));
    assert_eq!(
        sep,
        vec![[1, 32, 64, 32], [1, 64, 32, 16], [1, 128, 16, 8], [1, 256, 8, 4]]
    );
    assert_eq!(shapes(ModelConfig::b0(10).into_square()), sep);
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::b0(5);
    let x = Tensor4::<f32>::seeded_uniform(Shape4::new(2, 1, 128, 64).unwrap(), -1.0, 1.0, 4);
    let run = |seed| {
        ModelGraph::build(&cfg, Mode::Train, Init::Seeded(seed))
            .unwrap()
            .forward(&x)
            .unwrap()
    };
    assert_eq!(run(1).data(), run(1).data());
    assert_ne!(run(1).data(), run(2).data());
}

#[test]
fn parameter_names_are_unique_and_stable() {
    let g = ModelGraph::build(&ModelConfig::b1(309), Mode::Train, Init::Empty).unwrap();
    let params = g.parameters();
    let names: HashSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names.len(), params.len());
    for expected in [
        "stem.conv.weight",
        "stem.bn.var",
        "stage1.block0.pw_in.weight",
        "stage1.block0.hgroup.k21.weight",
        "stage1.block0.vgroup.k3.bn.mean",
        "stage1.block0.hgroup.identity.bn.gamma",
        "stage2.block0.shortcut.weight",
        "stage4.block2.mlp.project.bias",
        "head.weight",
    ] {
        assert!(names.contains(expected), "{expected}");
    }
    let head = params.iter().find(|p| p.name == "head.weight").unwrap();
    assert_eq!(head.shape, vec![309, 512]);
    let k21 = params
        .iter()
        .find(|p| p.name == "stage1.block0.hgroup.k21.weight")
        .unwrap();
    assert_eq!(k21.shape, vec![64, 1, 1, 21]);
    let v21 = params
        .iter()
        .find(|p| p.name == "stage1.block0.vgroup.k21.weight")
        .unwrap();
    assert_eq!(v21.shape, vec![64, 1, 21, 1]);

    let inf = reparameterize(&g).unwrap();
    let names: Vec<String> = inf.parameters().into_iter().map(|p| p.name).collect();
    assert!(names.iter().any(|n| n == "stage1.block0.hgroup.fused.weight"));
    assert!(!names.iter().any(|n| n.contains(".bn.")));
}

#[test]
fn bad_inputs_are_rejected() {
    let g = ModelGraph::build(&ModelConfig::b0(5), Mode::Inference, Init::Empty).unwrap();
    let x = Tensor4::<f32>::zeros(Shape4::new(1, 1, 500, 128).unwrap());
    let err = g.forward(&x).unwrap_err();
    assert!(matches!(err, ModelError::InputExtent { multiple_h: 32, .. }));
    assert!(err.to_string().contains("pad or crop"));
    let x = Tensor4::<f32>::zeros(Shape4::new(1, 2, 512, 128).unwrap());
    assert!(matches!(
        g.forward(&x),
        Err(ModelError::InputChannels { expected: 1, .. })
    ));
}

#[test]
fn even_kernels_are_rejected() {
    let cfg = ModelConfig::b0(5).map_blocks(|b| b.mixer = MixerConfig::separable(&[4, 3], true));
    assert!(cfg.validate().is_err());
    assert!(ModelGraph::build(&cfg, Mode::Train, Init::Empty).is_err());
}

#[test]
fn double_precision_tracks_single() {
    let mut g = ModelGraph::build(&ModelConfig::b0(5), Mode::Train, Init::Seeded(7)).unwrap();
    let x = Tensor4::<f32>::seeded_uniform(Shape4::new(2, 1, 128, 64).unwrap(), -1.0, 1.0, 8);
    g.calibrate_bn(&x).unwrap();
    let a = g.forward(&x).unwrap();
    let b = g.forward_as(&x.cast::<f64>()).unwrap();
    let d = a.max_abs_diff(&b).unwrap();
    assert!(d <= 1e-3 * b.max_abs().max(1.0), "{d}");
}

#[test]
fn calibration_requires_train_form() {
    let mut g = ModelGraph::build(&ModelConfig::b0(5), Mode::Inference, Init::Seeded(0)).unwrap();
    let x = Tensor4::<f32>::zeros(Shape4::new(1, 1, 64, 64).unwrap());
    assert!(matches!(g.calibrate_bn(&x), Err(ModelError::WrongMode { .. })));
}
