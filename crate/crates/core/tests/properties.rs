use std::collections::BTreeMap;

use lane3d_core::anchors::{
    combine_metas, materialize, softmax_rows, AnchorMetas, CoefficientMatrices, MetaRanges, MetaScaling, PrototypeBank,
};
use lane3d_core::assignment::solve;
use lane3d_core::geometry::{back_project, project_to_feature, CameraRig, GroundPoint};
use lane3d_core::io::{decode_named, encode_named, Tensor};
use lane3d_core::losses::ew_loss_raw;
use lane3d_core::sampling::{bilinear_sample, FeatureMap};
use lane3d_core::synth::{intrinsics, level_size, IMAGE_SIZE};
use ndarray::{Array1, Array2};
use proptest::collection::vec;
use proptest::prelude::*;

fn rows(n: usize, m: usize) -> impl Strategy<Value = Array2<f64>> {
    vec(0.01f64..1.0, n * m).prop_map(move |v| {
        let mut a = Array2::from_shape_vec((n, m), v).unwrap();
        for mut r in a.rows_mut() {
            let s = r.sum();
            r /= s;
        }
        a
    })
}

proptest! {
    #[test]
    fn projection_round_trips(
        height in 1.0f64..2.5,
        pitch in -0.1f64..0.1,
        level in 3u8..=5,
        x in -15.0f64..15.0,
        y in 2.0f64..120.0,
        z in -2.0f64..2.0,
    ) {
        let rig = CameraRig::looking_forward(intrinsics(), height, pitch, IMAGE_SIZE, level_size(level)).unwrap();
        let p = GroundPoint::new(x, y, z);
        prop_assume!(rig.sees(&p));
        let q = back_project(&project_to_feature(&p, &rig).unwrap(), &rig).unwrap();
        prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9 && (p.z - q.z).abs() < 1e-9);
    }

    #[test]
    fn softmax_ignores_row_shifts(v in vec(-30.0f64..30.0, 12), shift in -100.0f64..100.0) {
        let a = Array2::from_shape_vec((3, 4), v).unwrap();
        let p = softmax_rows(&a);
        let q = softmax_rows(&(&a + shift));
        for r in p.rows() {
            prop_assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn metas_stay_in_range(
        q in vec(-3.0f64..3.0, 12),
        w_x in rows(5, 6),
        w_phi in rows(5, 4),
        w_theta in rows(5, 2),
        literal in any::<bool>(),
    ) {
        let bank = PrototypeBank {
            q_x: Array1::from(q[..6].to_vec()),
            q_phi: Array1::from(q[6..10].to_vec()),
            q_theta: Array1::from(q[10..].to_vec()),
        };
        let ranges = MetaRanges::default();
        let coeffs = CoefficientMatrices { w_x, w_phi, w_theta };
        let scaling = if literal { MetaScaling::Literal } else { MetaScaling::Remapped };
        let metas = combine_metas(&bank, &coeffs, &ranges, scaling).unwrap();
        prop_assert_eq!(metas.len(), 5);
        for m in &metas {
            if literal {
                // [-1, 1] maps onto [2·min - max, max]
                prop_assert!(m.xs <= ranges.xs_max && m.xs >= 2.0 * ranges.xs_min - ranges.xs_max);
            } else {
                prop_assert!(ranges.contains(m), "{:?}", m);
            }
        }
    }

    #[test]
    fn anchors_are_straight(xs in -10.0f64..10.0, phi in -1.0f64..1.0, theta in -0.1f64..0.1) {
        let ys: Vec<f64> = (0..20).map(|k| 3.0 + 5.0 * k as f64).collect();
        let a = materialize(&AnchorMetas { xs, phi, theta }, &ys);
        for w in a.points.windows(3) {
            prop_assert!((w[2].x - 2.0 * w[1].x + w[0].x).abs() < 1e-9);
            prop_assert!((w[2].z - 2.0 * w[1].z + w[0].z).abs() < 1e-9);
        }
        prop_assert!((a.points[0].x - (xs + 3.0 * phi.tan())).abs() < 1e-12);
    }

    #[test]
    fn bilinear_sampling_is_linear(
        f in vec(-1.0f64..1.0, 4 * 5 * 2),
        g in vec(-1.0f64..1.0, 4 * 5 * 2),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        u in -0.5f64..5.5,
        v in -0.5f64..4.5,
    ) {
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let fm = |d: Vec<f64>| FeatureMap::new(4, 5, 2, 5, d).unwrap();
        let (sf, sg, sm) = (
            bilinear_sample(&fm(f), u, v),
            bilinear_sample(&fm(g), u, v),
            bilinear_sample(&fm(mix), u, v),
        );
        prop_assert_eq!(sf.valid, sm.valid);
        for c in 0..2 {
            prop_assert!((sm.values[c] - (a * sf.values[c] + b * sg.values[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn ew_loss_ignores_common_translation(
        base in vec(-1.0f64..1.0, 4),
        jitter in vec(-0.05f64..0.05, 12),
        shift in -5.0f64..5.0,
    ) {
        let y = [5.0, 15.0, 25.0, 35.0];
        let lanes: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..4).map(|k| base[k] + 3.5 * j as f64 + jitter[4 * j + k]).collect())
            .collect();
        let moved: Vec<Vec<f64>> = lanes.iter().map(|l| l.iter().map(|x| x + shift).collect()).collect();
        let r1: Vec<&[f64]> = lanes.iter().map(|l| l.as_slice()).collect();
        let r2: Vec<&[f64]> = moved.iter().map(|l| l.as_slice()).collect();
        let a = ew_loss_raw(&r1, &y, 0.1).unwrap().value;
        let b = ew_loss_raw(&r2, &y, 0.1).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn assignment_is_injective_and_no_worse_than_identity(v in vec(-5.0f64..5.0, 16)) {
        let cost = Array2::from_shape_vec((4, 4), v).unwrap();
        let r = solve(&cost);
        let mut cols: Vec<usize> = r.pairs().map(|(_, c)| c).collect();
        cols.sort();
        cols.dedup();
        prop_assert_eq!(cols.len(), 4);
        let identity: f64 = (0..4).map(|i| cost[[i, i]]).sum();
        prop_assert!(r.total <= identity + 1e-12);
    }

    #[test]
    fn named_tensors_round_trip(v in vec(-1e6f32..1e6, 1..50), name in "[a-z_.]{1,12}") {
        let mut map = BTreeMap::new();
        map.insert(name, Tensor::new(vec![v.len()], v.clone()).unwrap());
        map.insert("other".to_string(), Tensor::new(vec![1, 1], vec![0.5]).unwrap());
        let bytes = encode_named(&map).unwrap();
        prop_assert_eq!(decode_named(&bytes, "mem").unwrap(), map);
    }
}
