mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cellrecon::catalog::{discretize, Interface, TestFunction};
use cellrecon::edge::{Frame, Orientation};
use cellrecon::geometry::{curve_distance, CurveTarget, Polyline};
use cellrecon::grid::CellGrid;
use cellrecon::pipeline::{run_pipeline, PipelineConfig};
use cellrecon::reconstruct::graph_hausdorff;
use cellrecon::signature::compute_signature;
use cellrecon::spline::{zero_level_curve, TensorSpline};

use common::*;

fn coeff16() -> impl Strategy<Value = [[f64; 4]; 4]> {
    prop::array::uniform4(prop::array::uniform4(-1.0f64..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signature_vanishes_on_bilinear_data(c in prop::array::uniform4(-1.0f64..1.0), n in 4usize..40) {
        prop_assert!(signature_of_bilinear(c, n) <= 1e-13);
    }

    #[test]
    fn signature_is_scale_equivariant(values in prop::collection::vec(-1.0f64..1.0, 144), k in -4.0f64..4.0) {
        let g = CellGrid::new(12, values).unwrap();
        let s = compute_signature(&g).unwrap();
        let scaled = compute_signature(&g.map(|v| k * v)).unwrap();
        for (a, b) in s.values().iter().zip(scaled.values()) {
            prop_assert!((k * a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn aggregate_then_difference_round_trips(values in prop::collection::vec(-1.0f64..1.0, 400)) {
        let g = CellGrid::new(20, values).unwrap();
        prop_assert!(round_trip_error(&g) <= 1e-12);
    }

    #[test]
    fn q3_reproduces_bicubics(c in coeff16()) {
        prop_assert!(q3_error(&c, 16, 40) <= 1e-9);
    }

    #[test]
    fn partition_of_unity(p in 1usize..=5, x in 0.0f64..=1.0, y in 0.0f64..=1.0, m in 4usize..40) {
        prop_assert!(partition_error(p, 1.0 / m as f64, &[[x, y]]) <= 1e-13);
    }

    #[test]
    fn jacobian_matches_differences(seed in any::<u64>(), da in -0.05f64..0.05, db in -0.2f64..0.2, dc in -0.5f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_edge_model(&mut rng, 1.0 / 40.0);
        let v = [m.q[0] + da, m.q[1] + db, m.q[2] + dc];
        prop_assert!(jacobian_fd_error(&m, 40, v) <= 1e-6);
    }

    #[test]
    fn frame_round_trip(
        transpose in any::<bool>(),
        flip in any::<bool>(),
        a_off in -5i64..40,
        c_off in -5i64..40,
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let mut f = Frame::identity(40);
        f.orientation = if transpose { Orientation::XofY } else { Orientation::YofX };
        f.flip = flip;
        f.a_off = a_off;
        f.c_off = c_off;
        let l = f.to_local(x, y);
        let back = f.to_global(l[0], l[1]);
        prop_assert!((back[0] - x).abs() <= 1e-14 && (back[1] - y).abs() <= 1e-14);
    }

    #[test]
    fn discretize_is_linear(k1 in -3.0f64..3.0, k2 in -3.0f64..3.0) {
        let f1 = |x: f64, y: f64| (3.0 * x).sin() + y * y;
        let f2 = |x: f64, y: f64| (x * y).exp();
        let smooth = |f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>| TestFunction::custom(f.clone(), f, None);
        let a = discretize(&smooth(Arc::new(f1)), 16, 6).unwrap();
        let b = discretize(&smooth(Arc::new(f2)), 16, 6).unwrap();
        let c = discretize(&smooth(Arc::new(move |x, y| k1 * f1(x, y) + k2 * f2(x, y))), 16, 6).unwrap();
        for ((va, vb), vc) in a.values().iter().zip(b.values()).zip(c.values()) {
            prop_assert!((k1 * va + k2 * vb - vc).abs() <= 1e-13);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn negated_level_set_has_the_same_zero_curve(cx in 0.3f64..0.7, cy in 0.3f64..0.7, r in 0.1f64..0.25) {
        let circle = Interface::Circle { cx, cy, r };
        let mut s = TensorSpline::covering_unit_square(3, 1.0 / 16.0, 0.0).unwrap();
        for k2 in s.k_min..=s.k_max() {
            for k1 in s.k_min..=s.k_max() {
                let (x, y) = (k1 as f64 / 16.0, k2 as f64 / 16.0);
                s.set(k1, k2, circle.level(x, y));
            }
        }
        let a = zero_level_curve(&s, 64).unwrap();
        let b = zero_level_curve(&s.scaled(-1.0), 64).unwrap();
        prop_assert!(curve_distance(&a, CurveTarget::Polylines(&b), 0.0).hausdorff <= 1e-10);
    }

    #[test]
    fn curve_distance_is_symmetric(r1 in 0.1f64..0.3, r2 in 0.1f64..0.3, dx in -0.1f64..0.1) {
        let line = |c: Interface| vec![Polyline::open(c.sample(400).swap_remove(0))];
        let a = line(Interface::Circle { cx: 0.5, cy: 0.5, r: r1 });
        let b = line(Interface::Circle { cx: 0.5 + dx, cy: 0.5, r: r2 });
        let ab = curve_distance(&a, CurveTarget::Polylines(&b), 0.0).hausdorff;
        let ba = curve_distance(&b, CurveTarget::Polylines(&a), 0.0).hausdorff;
        prop_assert!((ab - ba).abs() <= 1e-12);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let f = TestFunction::closed_circle();
    let g = discretize(&f, 24, 6).unwrap();
    let a = run_pipeline(&g, &PipelineConfig::default()).unwrap().reconstruction;
    let b = run_pipeline(&g, &PipelineConfig::default()).unwrap().reconstruction;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let (x, y): (f64, f64) = (rand::Rng::gen(&mut rng), rand::Rng::gen(&mut rng));
        assert_eq!(a.evaluate(x, y).unwrap().to_bits(), b.evaluate(x, y).unwrap().to_bits());
        assert_eq!(a.evaluate(x, y).unwrap().to_bits(), a.evaluate(x, y).unwrap().to_bits());
    }
}

#[test]
fn graph_distance_to_itself_is_small() {
    // A reconstruction of a single smooth side compared with the function
    // it came from: the graph distance is bounded by the sup-norm error.
    let f = TestFunction::smooth();
    let g = discretize(&f, 32, 6).unwrap();
    let r = run_pipeline(&g, &PipelineConfig::default()).unwrap().reconstruction;
    let (sup, _) = cellrecon::reconstruct::field_error(&r, &f, 129, cellrecon::reconstruct::FieldRegion::All);
    let d = graph_hausdorff(&r, &f, 129);
    assert!(d <= sup + 1e-15, "{d} {sup}");
}
