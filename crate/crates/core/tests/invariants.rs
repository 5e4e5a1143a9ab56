use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wcc_core::backbone::checkpoint::{decode, encode};
use wcc_core::backbone::{build_cls_variant, BackboneConfig, StageKind, NUM_STAGES};
use wcc_core::complexity::{
    build_stage, counted_params, measured_model_macs, measured_stage_macs, model_cost, stage_cost,
    StageSpec,
};
use wcc_core::tensor::ops::{conv2d, csa_align, softmax_channels, srf_aggregate, Conv2dSpec};
use wcc_core::tensor::{ParamStore, Shape, Tensor};
use wcc_core::wavelet::{dwt2d, idwt2d, WaveletKernel};

fn centre_delta(k: usize) -> Tensor<f64> {
    Tensor::from_fn(Shape::new(1, 1, k, k), |_, _, y, x| {
        if y == k / 2 && x == k / 2 {
            1.0
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dwt_is_linear(h2 in 1usize..8, w2 in 1usize..8, a in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = WaveletKernel::haar();
        let x = Tensor::<f64>::randn(Shape::new(1, 2, 2 * h2, 2 * w2), 1.0, &mut rng);
        let y = Tensor::<f64>::randn(x.shape(), 1.0, &mut rng);
        let lhs = dwt2d(&x.scale(a).add(&y).unwrap(), &k).unwrap();
        let (sx, sy) = (dwt2d(&x, &k).unwrap(), dwt2d(&y, &k).unwrap());
        prop_assert!(lhs.ll.max_abs_diff(&sx.ll.scale(a).add(&sy.ll).unwrap()) < 1e-12);
        prop_assert!(lhs.hh.max_abs_diff(&sx.hh.scale(a).add(&sy.hh).unwrap()) < 1e-12);
        let back = idwt2d(&lhs, &k).unwrap();
        prop_assert!(back.max_abs_diff(&x.scale(a).add(&y).unwrap()) < 1e-12);
    }

    #[test]
    fn conv_is_homogeneous(h in 3usize..10, w in 3usize..10, stride in 1usize..3, a in -4.0f64..4.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::randn(Shape::new(2, 3, h, w), 1.0, &mut rng);
        let k = Tensor::<f64>::randn(Shape::new(4, 3, 3, 3), 1.0, &mut rng);
        let spec = Conv2dSpec::new(stride, 1);
        let lhs = conv2d(&x.scale(a), &k, spec).unwrap();
        let rhs = conv2d(&x, &k, spec).unwrap().scale(a);
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn zero_offsets_with_centre_delta_align_to_identity(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ft = Tensor::<f64>::randn(Shape::new(2, 3, h, w), 1.0, &mut rng);
        let off = Tensor::zeros(Shape::new(2, 2, h, w));
        prop_assert_eq!(csa_align(&ft, &off, &centre_delta(3)).unwrap(), ft);
    }

    #[test]
    fn rearranging_weights_form_a_distribution(h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::<f64>::randn(Shape::new(1, 9, h, w), 3.0, &mut rng);
        let p = softmax_channels(&logits);
        for y in 0..h {
            for x in 0..w {
                let s: f64 = (0..9).map(|c| p.at(0, c, y, x)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!((0..9).all(|c| p.at(0, c, y, x) > 0.0));
            }
        }
        // a constant map is a fixed point of any convex aggregation away from borders
        let f = Tensor::<f64>::full(Shape::new(1, 2, h, w), 1.5);
        let agg = srf_aggregate(&f, &p).unwrap();
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                prop_assert!((agg.at(0, 1, y, x) - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stage_costs_match_instrumented_counts(
        hm in 1usize..7, wm in 1usize..7, j in 0usize..2, c in 1usize..6, n in 0usize..3, adwt in any::<bool>()
    ) {
        // the closed forms assume every stage sees even sides
        let spec = StageSpec::new(hm << (j + 1), wm << (j + 1), j, c, 2 * c, n);
        let kind = if adwt { StageKind::Adwt } else { StageKind::Cnn };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f32>::new();
        let stage = build_stage(&mut store, &spec, kind, &mut rng).unwrap();
        let cost = stage_cost(&spec, kind);
        prop_assert_eq!(measured_stage_macs(&mut store, &stage, &spec).unwrap(), cost.flops_forward);
        prop_assert_eq!(counted_params(&store), cost.params);
    }

    #[test]
    fn checkpoint_bytes_round_trip(n in 1usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f32>::randn(Shape::new(n, c, h, w), 1.0, &mut rng);
        let b = Tensor::<f32>::randn(Shape::new(1, 1, 1, c), 1.0, &mut rng);
        let bytes = encode(&[("a", &a), ("b.weight", &b)]);
        let entries = decode(&bytes).unwrap();
        prop_assert_eq!(entries.len(), 2);
        prop_assert_eq!(&entries[1].name, "b.weight");
        prop_assert_eq!(entries[0].tensor::<f32>(), a);
        prop_assert_eq!(entries[1].tensor::<f32>(), b);
        prop_assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn whole_model_costs_match_instrumented_counts() {
    let mut cfg = BackboneConfig::classification();
    cfg.tau = 0.125;
    for depth in 0..=NUM_STAGES {
        let kinds = StageKind::prefix(depth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(depth as u64);
        let mut store = ParamStore::<f32>::new();
        let model = build_cls_variant(&mut store, &cfg, &kinds, 10, &mut rng).unwrap();
        let cost = model_cost(&cfg, &kinds, 10).unwrap().total();
        assert_eq!(
            measured_model_macs(&mut store, &model).unwrap(),
            cost.flops_forward,
            "depth {depth}"
        );
        assert_eq!(counted_params(&store), cost.params, "depth {depth}");
    }
}
