mod common;

use common::{bbox, det, gt};
use detcal::assignment::{assignment_cost, hungarian_assign};
use detcal::geometry::{iou, match_detections, Detection, GroundTruth};
use detcal::Tensor;
use proptest::prelude::*;

fn box_strategy() -> impl Strategy<Value = [f64; 4]> {
    (0.0f64..20.0, 0.0f64..20.0, 0.5f64..15.0, 0.5f64..15.0).prop_map(|(x, y, w, h)| [x, y, w, h])
}

fn scene_strategy(max: usize) -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
    let d = prop::collection::vec((0i64..2, 1i64..3, box_strategy(), 0.0f64..1.0), 0..=max)
        .prop_map(|v| v.into_iter().map(|(i, c, b, s)| det(i, c, b, s)).collect::<Vec<_>>());
    let g = prop::collection::vec((0i64..2, 1i64..3, box_strategy()), 0..=max)
        .prop_map(|v| v.into_iter().map(|(i, c, b)| gt(i, c, b)).collect::<Vec<_>>());
    (d, g)
}

#[test]
fn iou_golden_values() {
    let a = bbox([0.0, 0.0, 2.0, 2.0]);
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(iou(&a, &bbox([5.0, 5.0, 1.0, 1.0])), 0.0);
    let v = iou(&a, &bbox([1.0, 1.0, 2.0, 2.0]));
    assert!((v - 1.0 / 7.0).abs() < 1e-15);
}

#[test]
fn matching_golden_values() {
    let g = vec![gt(1, 1, [0.0, 0.0, 10.0, 10.0])];
    let m = match_detections(&[det(1, 1, [0.0, 0.0, 10.0, 10.0], 0.7)], &g, 0.5).unwrap();
    assert_eq!((m[0].f, m[0].iou), (1, 1.0));
    let m = match_detections(&[det(1, 2, [0.0, 0.0, 10.0, 10.0], 0.7)], &g, 0.5).unwrap();
    assert_eq!(m[0].f, 0);

    // IoU 0.8 at score 0.9 and IoU 0.9 at score 0.8.
    let dets = vec![det(1, 1, [0.0, 0.0, 10.0, 8.0], 0.9), det(1, 1, [0.0, 0.0, 10.0, 9.0], 0.8)];
    let m = match_detections(&dets, &g, 0.5).unwrap();
    assert!((iou(&dets[0].bbox, &g[0].bbox) - 0.8).abs() < 1e-12);
    assert!((iou(&dets[1].bbox, &g[0].bbox) - 0.9).abs() < 1e-12);
    assert_eq!((m[0].f, m[1].f), (1, 0));
    assert_eq!(common::exhaustive_match_oracle(&dets, &g, 0.5), vec![1, 0]);
}

#[test]
fn hungarian_golden_values() {
    let c = Tensor::new(vec![2, 2], vec![1.0, 2.0, 2.0, 1.0]).unwrap();
    let p = hungarian_assign(&c).unwrap();
    assert_eq!(p, vec![(0, 0), (1, 1)]);
    assert_eq!(assignment_cost(&c, &p), 2.0);
    let c = Tensor::new(vec![2, 2], vec![5.0, 1.0, 1.0, 5.0]).unwrap();
    let p = hungarian_assign(&c).unwrap();
    assert_eq!(p, vec![(0, 1), (1, 0)]);
    assert_eq!(assignment_cost(&c, &p), 2.0);
    let c = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 0.0 } else { 1.0 + i as f64 }).unwrap();
    assert_eq!(hungarian_assign(&c).unwrap(), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
}

proptest! {
    #[test]
    fn iou_symmetric_and_translation_invariant(a in box_strategy(), b in box_strategy(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let (a, b) = (bbox(a), bbox(b));
        prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        let moved = iou(&a.translated(dx, dy), &b.translated(dx, dy));
        prop_assert!((moved - iou(&a, &b)).abs() <= 1e-12);
        prop_assert!((iou(&a, &b) - common::iou_oracle(&a, &b)).abs() <= 1e-12);
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn true_positives_bounded_per_image((dets, gts) in scene_strategy(6), k in 0.05f64..1.0) {
        let m = match_detections(&dets, &gts, k).unwrap();
        for image in 0..2i64 {
            let id = detcal::geometry::ImageId::Int(image);
            let tp = m.iter().filter(|x| x.detection.image_id == id && x.f == 1).count();
            let nd = dets.iter().filter(|d| d.image_id == id).count();
            let ng = gts.iter().filter(|g| g.image_id == id).count();
            prop_assert!(tp <= nd.min(ng));
        }
        let mut used: Vec<usize> = m.iter().filter_map(|x| x.matched_gt).collect();
        let n = used.len();
        used.sort_unstable();
        used.dedup();
        prop_assert_eq!(used.len(), n);
    }

    #[test]
    fn raising_threshold_never_adds_matches((dets, gts) in scene_strategy(6), k1 in 0.05f64..1.0, k2 in 0.05f64..1.0) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let count = |k| match_detections(&dets, &gts, k).unwrap().iter().filter(|m| m.f == 1).count();
        prop_assert!(count(hi) <= count(lo));
    }

    #[test]
    fn greedy_matches_exhaustive_oracle((dets, gts) in scene_strategy(3), k in 0.05f64..0.9) {
        let m = match_detections(&dets, &gts, k).unwrap();
        let f: Vec<u8> = m.iter().map(|x| x.f).collect();
        prop_assert_eq!(f, common::exhaustive_match_oracle(&dets, &gts, k));
    }

    #[test]
    fn output_independent_of_input_order((dets, gts) in scene_strategy(6), k in 0.05f64..1.0) {
        let m = match_detections(&dets, &gts, k).unwrap();
        let mut rev = dets.clone();
        rev.reverse();
        let r = match_detections(&rev, &gts, k).unwrap();
        // Equal scores are broken by position, so only compare distinct-score inputs.
        let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        scores.sort_by(f64::total_cmp);
        scores.dedup();
        prop_assume!(scores.len() == dets.len());
        let fwd: Vec<u8> = m.iter().map(|x| x.f).collect();
        let mut back: Vec<u8> = r.iter().map(|x| x.f).collect();
        back.reverse();
        prop_assert_eq!(fwd, back);
    }

    #[test]
    fn hungarian_is_optimal(n in 1usize..=6, m in 1usize..=6, seed in prop::collection::vec(0.0f64..10.0, 36)) {
        let cost = Tensor::from_fn(&[n, m], |i| seed[i]).unwrap();
        let pairs = hungarian_assign(&cost).unwrap();
        prop_assert_eq!(pairs.len(), n.min(m));
        let mut rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), n.min(m));
        prop_assert_eq!(cols.len(), n.min(m));
        let best = common::brute_force_assignment(&cost);
        prop_assert!((assignment_cost(&cost, &pairs) - best).abs() <= 1e-9);
    }
}
