mod common;

use common::{probe, random_tensor, rng};
use msg_unet::nets::{
    ArchitectureConfig, DiscriminatorBank, FeatureExtractor, GeneratorPlan, MsgUNetGenerator, Resolution,
    DISCRIMINATOR_TAPS,
};
use msg_unet::tensor::{BnMode, Graph, Shape, Tensor, Var};
use msg_unet::Real;
use proptest::prelude::*;

fn source_pyramid(config: &ArchitectureConfig, batch: usize, seed: u64) -> Vec<Tensor> {
    let mut r = rng(seed);
    config
        .scales
        .iter()
        .map(|s| random_tensor(&mut r, Shape::new(batch, 3, s.h, s.w)))
        .collect()
}

/// Parameter count of the generator walked from the architecture rules
/// alone: conv weights, conv biases where no batch-norm follows, and
/// gamma/beta per batch-normed channel.
fn shape_walk_parameters(c: &ArchitectureConfig) -> usize {
    let k = c.kernel;
    let conv_bn = |cin: usize, cout: usize, kk: usize| cin * cout * kk * kk + 2 * cout;
    let w = &c.widths;
    let levels = w.len();
    let n = c.scales.len();
    let mut total = conv_bn(3, w[0], k) + conv_bn(w[0], w[0], k);
    for j in 1..levels {
        total += conv_bn(w[j - 1], w[j], k);
        if j < n {
            total += conv_bn(w[j] + 3, w[j], 1) + conv_bn(w[j], w[j], k);
        }
    }
    for j in 0..levels - 1 {
        // transposed upsampler, then the merge block
        total += conv_bn(w[j + 1], w[j], k) + conv_bn(w[j], w[j], k);
        if j < n && (c.intermediate_heads || j == 0) {
            total += w[j] * 3 * 3 * 3 + 3;
        }
    }
    total
}

#[test]
fn toy_parameter_count_matches_shape_walk() {
    let config = ArchitectureConfig::toy();
    let generator = MsgUNetGenerator::build(&config, 0).unwrap();
    let expected = shape_walk_parameters(&config);
    assert_eq!(generator.num_parameters(), expected);
    assert_eq!(GeneratorPlan::new(&config).unwrap().parameter_count(), expected);

    let mut off = config.clone();
    off.intermediate_heads = false;
    assert_eq!(
        MsgUNetGenerator::build(&off, 0).unwrap().num_parameters(),
        shape_walk_parameters(&off)
    );
}

#[test]
fn same_seed_gives_identical_parameters() {
    let config = ArchitectureConfig::toy();
    let a = MsgUNetGenerator::build(&config, 7).unwrap();
    let b = MsgUNetGenerator::build(&config, 7).unwrap();
    let c = MsgUNetGenerator::build(&config, 8).unwrap();
    for (pa, pb) in a.store().params.iter().zip(&b.store().params) {
        assert_eq!(pa.name, pb.name);
        let (da, db) = (pa.value.data(), pb.value.data());
        assert!(da.iter().zip(db).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", pa.name);
    }
    assert!(a.store().params.iter().zip(&c.store().params).any(|(x, y)| x.value != y.value));
}

#[test]
fn non_doubling_chain_is_rejected() {
    let mut config = ArchitectureConfig::toy();
    config.scales[1] = Resolution::new(96, 48);
    assert!(MsgUNetGenerator::build(&config, 0).is_err());

    let mut config = ArchitectureConfig::toy();
    config.widths.pop();
    assert!(MsgUNetGenerator::build(&config, 0).is_err());
}

#[test]
fn toy_forward_emits_configured_scales_in_open_unit_interval() {
    let config = ArchitectureConfig::toy();
    let mut generator = MsgUNetGenerator::build(&config, 1).unwrap();
    let outs = generator.generate(&source_pyramid(&config, 2, 3)).unwrap();
    let shapes: Vec<Shape> = outs.iter().map(Tensor::shape).collect();
    assert_eq!(
        shapes,
        vec![Shape::new(2, 3, 32, 16), Shape::new(2, 3, 64, 32), Shape::new(2, 3, 128, 64)]
    );
    for o in &outs {
        assert!(o.data().iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn heads_off_gives_only_the_finest_output() {
    let mut config = ArchitectureConfig::toy();
    config.intermediate_heads = false;
    let mut generator = MsgUNetGenerator::build(&config, 1).unwrap();
    let outs = generator.generate(&source_pyramid(&config, 1, 3)).unwrap();
    assert_eq!(outs.len(), 1);
    assert_eq!(outs[0].shape(), Shape::new(1, 3, 128, 64));
}

#[test]
fn pyramid_mismatch_is_an_error() {
    let config = ArchitectureConfig::toy();
    let mut generator = MsgUNetGenerator::build(&config, 1).unwrap();
    let mut inputs = source_pyramid(&config, 1, 3);
    inputs.swap(0, 1);
    assert!(generator.generate(&inputs).is_err());
    inputs.pop();
    assert!(generator.generate(&inputs).is_err());
}

fn conv_len(len: usize, k: usize, stride: usize, pad_total: usize) -> usize {
    (len + pad_total - k) / stride + 1
}

#[test]
fn discriminator_patch_map_follows_the_topology() {
    let config = ArchitectureConfig::toy();
    let mut bank = DiscriminatorBank::build(&config, 0).unwrap();
    assert_eq!(bank.len(), config.scales.len());
    // 64x32 is scale 1 of the toy chain.
    let (mut h, mut w) = (64, 32);
    for _ in 0..3 {
        h = conv_len(h, 4, 2, 2);
        w = conv_len(w, 4, 2, 2);
    }
    for _ in 0..2 {
        h = conv_len(h, 4, 1, 3);
        w = conv_len(w, 4, 1, 3);
    }
    assert_eq!(bank.get(1).unwrap().patch_resolution(), Resolution::new(h, w));

    let mut g = Graph::new();
    let params = bank.bind(&mut g, false);
    let mut r = rng(4);
    let x = g.constant(random_tensor(&mut r, Shape::new(2, 3, 64, 32)));
    let y = g.constant(random_tensor(&mut r, Shape::new(2, 3, 64, 32)));
    let y_copy = g.constant(g.value(y).clone());
    let out = bank.forward(&mut g, &params, 1, x, y, BnMode::Eval).unwrap();
    assert_eq!(g.shape(out.logits), Shape::new(2, 1, h, w));
    assert_eq!(out.features.len(), DISCRIMINATOR_TAPS);
    assert_eq!(DISCRIMINATOR_TAPS, 5);
    assert_eq!(*out.features.last().unwrap(), out.logits);

    let again = bank.forward(&mut g, &params, 1, x, y_copy, BnMode::Eval).unwrap();
    assert_eq!(g.value(out.logits), g.value(again.logits));

    // Wrong scale for the inputs.
    assert!(bank.forward(&mut g, &params, 0, x, y, BnMode::Eval).is_err());
}

#[test]
fn constant_input_gives_constant_interior_logits() {
    let mut config = ArchitectureConfig::toy();
    config.scales = vec![Resolution::new(256, 128)];
    config.bottleneck = Resolution::new(128, 64);
    config.widths = vec![4, 4];
    config.disc_width = 4;
    let mut bank = DiscriminatorBank::build(&config, 2).unwrap();
    let mut g = Graph::new();
    let params = bank.bind(&mut g, false);
    let x = g.constant(Tensor::full(Shape::new(1, 3, 256, 128), 0.3));
    let y = g.constant(Tensor::full(Shape::new(1, 3, 256, 128), -0.6));
    let out = bank.forward(&mut g, &params, 0, x, y, BnMode::Eval).unwrap();
    let map = g.value(out.logits);
    let s = map.shape();
    assert_eq!((s.h, s.w), (32, 16));
    // Zero padding reaches at most six rows/columns in from each border.
    let margin = 6;
    let centre = map.at(0, 0, s.h / 2, s.w / 2);
    for i in margin..s.h - margin {
        for j in margin..s.w - margin {
            assert!((map.at(0, 0, i, j) - centre).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn extractor_is_frozen_and_has_five_taps() {
    let config = ArchitectureConfig::toy();
    let extractor = FeatureExtractor::random(&config.extractor_widths, 3).unwrap();
    assert_eq!(extractor.depth(), 5);
    let mut r = rng(5);
    let image = random_tensor(&mut r, Shape::new(1, 3, 32, 16));
    assert_eq!(extractor.features(&image).unwrap(), extractor.features(&image.clone()).unwrap());

    let mut g = Graph::new();
    let weights = extractor.bind(&mut g);
    let x = g.parameter(image);
    let feats = extractor.forward(&mut g, &weights, x).unwrap();
    assert_eq!(feats.len(), 5);
    let terms: Vec<Var> = feats.iter().map(|&f| probe(&mut g, f)).collect();
    let loss = g.add_all(&terms).unwrap();
    g.backward(loss).unwrap();
    assert!(g.grad(x).is_some_and(|t| t.max_abs() > 0.0));
    for &w in &weights {
        assert!(!g.requires_grad(w));
        assert!(g.grad(w).is_none_or(|t| t.max_abs() == 0.0));
    }
}

/// Gradients of `Σ_k probe(outputs[k])` over the heads in `heads`.
fn head_grads(generator: &mut MsgUNetGenerator, inputs: &[Tensor], heads: &[usize]) -> Vec<Option<Tensor>> {
    let mut g = Graph::new();
    let params = generator.bind(&mut g, true);
    let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let outs = generator.forward(&mut g, &params, &xs, BnMode::Train).unwrap();
    let terms: Vec<Var> = heads.iter().map(|&k| probe(&mut g, outs[k])).collect();
    let loss = g.add_all(&terms).unwrap();
    g.backward(loss).unwrap();
    generator.store().grads(&g, &params)
}

fn nonzero(t: &Option<Tensor>) -> bool {
    t.as_ref().is_some_and(|t| t.max_abs() > 0.0)
}

#[test]
fn coarsest_head_alone_reaches_the_whole_encoder() {
    let config = ArchitectureConfig::toy();
    let mut generator = MsgUNetGenerator::build(&config, 11).unwrap();
    let inputs = source_pyramid(&config, 2, 12);
    let grads = head_grads(&mut generator, &inputs, &[0]);
    let n = config.scales.len();
    let branch = n - 1;
    for group in generator.param_groups() {
        let level: usize = group.name.rsplit('L').next().unwrap().parse().unwrap();
        let reached = group.name.starts_with("enc.")
            || (group.name.starts_with("dec.") && level >= branch)
            || group.name == format!("head.L{branch}");
        for &i in &group.indices {
            let name = &generator.store().params[i].name;
            if reached {
                assert!(nonzero(&grads[i]), "{name} got no gradient");
            } else {
                assert!(!nonzero(&grads[i]), "{name} got a gradient from the coarsest head");
            }
        }
    }
}

#[test]
fn head_gradients_add_up() {
    let config = ArchitectureConfig::toy();
    let mut generator = MsgUNetGenerator::build(&config, 13).unwrap();
    let inputs = source_pyramid(&config, 2, 14);
    let all = head_grads(&mut generator, &inputs, &[0, 1, 2]);
    let single: Vec<Vec<Option<Tensor>>> = (0..3).map(|k| head_grads(&mut generator, &inputs, &[k])).collect();
    let tol: Real = if cfg!(feature = "f64") { 1e-10 } else { 1e-4 };
    for (i, total) in all.iter().enumerate() {
        let numel = generator.store().params[i].value.numel();
        let sum: Vec<Real> = (0..numel)
            .map(|e| single.iter().map(|g| g[i].as_ref().map_or(0.0, |t| t.data()[e])).sum())
            .collect();
        let total: Vec<Real> = total.as_ref().map_or(vec![0.0; numel], |t| t.data().to_vec());
        for (a, b) in total.iter().zip(&sum) {
            assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{}: {a} vs {b}", generator.store().params[i].name);
        }
    }
}

fn valid_config() -> impl Strategy<Value = ArchitectureConfig> {
    (
        1usize..=3,
        1usize..=2,
        prop_oneof![Just((1usize, 1usize)), Just((2, 1)), Just((1, 2))],
        prop_oneof![Just(2usize), Just(4)],
        any::<bool>(),
        prop::collection::vec(1usize..=6, 8),
    )
        .prop_map(|(scales, extra, (ah, aw), kernel, heads, widths)| {
            let bottleneck = Resolution::new(ah, aw);
            let coarsest = Resolution::new(ah << extra, aw << extra);
            let scales: Vec<Resolution> = (0..scales).map(|k| Resolution::new(coarsest.h << k, coarsest.w << k)).collect();
            let mut c = ArchitectureConfig::toy();
            let levels = scales.len() + extra;
            c.scales = scales;
            c.bottleneck = bottleneck;
            c.widths = widths[..levels].to_vec();
            c.kernel = kernel;
            c.intermediate_heads = heads;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_shapes_close_over_valid_configs(config in valid_config(), seed in 0u64..1000) {
        let mut generator = MsgUNetGenerator::build(&config, seed).unwrap();
        let inputs = source_pyramid(&config, 2, seed);
        let mut g = Graph::new();
        let params = generator.bind(&mut g, true);
        let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let outs = generator.forward(&mut g, &params, &xs, BnMode::Train).unwrap();
        let expected: Vec<Shape> = config
            .head_scales()
            .iter()
            .map(|&k| Shape::new(2, 3, config.scales[k].h, config.scales[k].w))
            .collect();
        let got: Vec<Shape> = outs.iter().map(|&v| g.shape(v)).collect();
        prop_assert_eq!(got, expected);
    }
}
