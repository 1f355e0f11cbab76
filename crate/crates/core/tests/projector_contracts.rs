mod common;

use proptest::prelude::*;
use segfuse::projector::graph::{self, SampleVars};
use segfuse::projector::{
    count_params, fuse_concat, fuse_replace, fuse_weighted_addition, mix_base, projector_forward, stack_features, Dims,
    FusionVariant, ProjectorParams, DEFAULT_BACKBONE_SIZE,
};
use segfuse::tensor::{Binder, Tape};
use segfuse::{Exec, TensorF};

use common::randn;

const VARIANTS: [&str; 7] = [
    "baseline",
    "replace",
    "learned-mixing",
    "weighted-addition:0",
    "weighted-addition:1",
    "concat",
    "concat-segmaps",
];

fn tiny() -> Dims {
    Dims { t_v: 9, d_vis: 6, t_c: 4, d_cls: 5, d_r: 7, n_cls: 3, g: 2, d_llm: 8, d_s: 4 }
}

fn inputs(d: &Dims, b: usize, seed: u64) -> (TensorF, TensorF, TensorF) {
    let f = randn(&[b, d.t_v, d.d_vis], seed);
    let r = randn(&[b, d.d_r], seed + 1);
    let m = 2 * d.g;
    let s = randn(&[b, d.n_cls, m, m], seed + 2).map(|v| f64::from(u8::from(v > 0.3)));
    (f, r, s)
}

fn run(v: &FusionVariant, d: Dims, f: &TensorF, r: &TensorF, s: &TensorF, seed: u64) -> TensorF {
    let p = ProjectorParams::init(d, *v, seed).unwrap();
    projector_forward(&p, f, r, v.use_segmaps.then_some(s), Exec::Sequential).unwrap()
}

#[test]
fn output_token_counts_match_variants() {
    let d = tiny();
    let (f, r, s) = inputs(&d, 3, 1);
    for name in VARIANTS {
        let v = FusionVariant::parse(name).unwrap();
        let y = run(&v, d, &f, &r, &s, 2);
        assert_eq!(y.shape(), [3, v.output_tokens(&d), d.d_llm], "{name}");
        assert!(y.all_finite());
    }
}

#[test]
fn weighted_addition_at_zero_is_the_baseline_path() {
    let d = Dims::desk();
    let (f, r, s) = inputs(&d, 2, 5);
    let base = run(&FusionVariant::baseline(), d, &f, &r, &s, 7);
    let wa = run(&FusionVariant::parse("weighted-addition:0").unwrap(), d, &f, &r, &s, 7);
    assert_eq!(base.bits(), wa.bits());

    let p = ProjectorParams::init(d, FusionVariant::parse("weighted-addition:0").unwrap(), 7).unwrap();
    let r_i = mix_base(&stack_features(&r, &p).unwrap(), &p).unwrap();
    assert_eq!(fuse_weighted_addition(&f, &r_i, &p).unwrap().bits(), f.bits());
}

#[test]
fn replacement_keeps_vision_shape_at_full_scale() {
    let d = Dims::paper();
    let p = ProjectorParams::init(d, FusionVariant::parse("replace").unwrap(), 0).unwrap();
    let r = randn(&[1, d.d_r], 3);
    let y = fuse_replace(&stack_features(&r, &p).unwrap(), &p).unwrap();
    assert_eq!(y.shape(), [1, 576, 1024]);
}

#[test]
fn parameter_budget_bands_at_full_scale() {
    let d = Dims::paper();
    let fo = count_params(&FusionVariant::concat(), &d, DEFAULT_BACKBONE_SIZE);
    let fs = count_params(&FusionVariant::concat_segmaps(), &d, DEFAULT_BACKBONE_SIZE);
    assert!((0.0002..=0.0015).contains(&fo.added_fraction), "{}", fo.added_fraction);
    assert!((0.0004..=0.0020).contains(&fs.added_fraction), "{}", fs.added_fraction);
    let ratio = fs.segmap_branch as f64 / fs.feature_branch as f64;
    assert!((0.3..=0.7).contains(&ratio), "{ratio}");
    assert_eq!(fo.feature_branch, fs.feature_branch);
}

#[test]
fn checkpoints_round_trip_for_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    for (i, name) in VARIANTS.iter().enumerate() {
        let p = ProjectorParams::init(tiny(), FusionVariant::parse(name).unwrap(), i as u64).unwrap();
        let path = dir.path().join(format!("{i}.ckpt"));
        p.save(&path).unwrap();
        assert_eq!(ProjectorParams::load(&path).unwrap(), p, "{name}");
    }
}

fn fused_rows(v: &FusionVariant, d: Dims, f: &TensorF, r: &TensorF, seed: u64) -> TensorF {
    let p = ProjectorParams::init(d, *v, seed).unwrap();
    let mut tape = Tape::new();
    let mut b = Binder::frozen(&p.store);
    let x = SampleVars {
        f_i: tape.constant(f.clone()),
        r: tape.constant(r.clone()),
        seg: v.use_segmaps.then(|| tape.constant(TensorF::full(&[d.n_cls, d.g * d.g], 0.5))),
    };
    let y = graph::fusion(&mut tape, &mut b, &d, v, x).unwrap();
    tape.value(y).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concatenation_copies_vision_tokens_bit_exactly(seed in any::<u64>(), segmaps in any::<bool>()) {
        let d = tiny();
        let f = randn(&[d.t_v, d.d_vis], seed);
        let r = randn(&[1, d.d_r], seed ^ 1);
        let v = if segmaps { FusionVariant::concat_segmaps() } else { FusionVariant::concat() };
        let y = fused_rows(&v, d, &f, &r, seed);
        prop_assert_eq!(y.shape()[0], v.output_tokens(&d));
        prop_assert_eq!(y.slice_outer(0, d.t_v).unwrap().bits(), f.bits());

        let fb = f.clone().reshape(&[1, d.t_v, d.d_vis]).unwrap();
        let ri = randn(&[1, d.t_c, d.d_vis], seed ^ 2);
        let cat = fuse_concat(&fb, &ri).unwrap();
        prop_assert_eq!(cat.index_outer(0).unwrap().slice_outer(0, d.t_v).unwrap().bits(), f.bits());
    }

    #[test]
    fn batch_order_does_not_leak(seed in any::<u64>(), pick in 0usize..7) {
        let d = tiny();
        let v = FusionVariant::parse(VARIANTS[pick]).unwrap();
        let (f, r, s) = inputs(&d, 3, seed);
        let y = run(&v, d, &f, &r, &s, 4);
        let order = [2, 0, 1];
        let swap = |t: &TensorF| TensorF::stack(&order.iter().map(|&i| t.index_outer(i).unwrap()).collect::<Vec<_>>()).unwrap();
        let y2 = run(&v, d, &swap(&f), &swap(&r), &swap(&s), 4);
        prop_assert_eq!(swap(&y).bits(), y2.bits());
    }
}

#[test]
fn parallel_and_sequential_forward_agree() {
    let d = Dims::desk();
    let (f, r, s) = inputs(&d, 4, 9);
    let v = FusionVariant::concat_segmaps();
    let p = ProjectorParams::init(d, v, 1).unwrap();
    let a = projector_forward(&p, &f, &r, Some(&s), Exec::Sequential).unwrap();
    let b = projector_forward(&p, &f, &r, Some(&s), Exec::Parallel).unwrap();
    assert_eq!(a.bits(), b.bits());
}
