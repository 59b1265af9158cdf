mod common;

use common::{check_instance, LawTally, SLACK};
use obstacle_core::geometry::{hausdorff, ConvexSet};
use proptest::prelude::*;

fn ball_2d() -> impl Strategy<Value = ConvexSet> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64).prop_map(|(a, b, r)| ConvexSet::new_ball(vec![a, b], r).unwrap())
}

fn box_2d() -> impl Strategy<Value = ConvexSet> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64, 0.1..3.0f64)
        .prop_map(|(a, b, w, h)| ConvexSet::new_box(vec![a, b], vec![a + w, b + h]).unwrap())
}

fn set_2d() -> impl Strategy<Value = ConvexSet> {
    prop_oneof![ball_2d(), box_2d()]
}

fn pt() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 2)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn projection_is_nonexpansive(d in set_2d(), x in pt(), y in pt()) {
        prop_assert!(dist(&d.project(&x), &d.project(&y)) <= dist(&x, &y) + SLACK);
    }

    #[test]
    fn projection_is_idempotent(d in set_2d(), x in pt()) {
        let p = d.project(&x);
        prop_assert!(dist(&d.project(&p), &p) <= SLACK);
        prop_assert!(d.contains(&p, SLACK));
    }

    #[test]
    fn two_set_projection_bound(d in set_2d(), g in set_2d(), x in pt(), y in pt()) {
        let lhs = dist(&d.project(&x), &g.project(&y)).powi(2);
        let rhs = dist(&x, &y).powi(2) + 2.0 * (d.dist(&x) + g.dist(&y)) * hausdorff(&d, &g);
        prop_assert!(lhs <= rhs + SLACK * (1.0 + rhs));
    }

    #[test]
    fn hausdorff_is_a_metric(a in set_2d(), b in set_2d(), c in set_2d()) {
        prop_assert_eq!(hausdorff(&a, &a), 0.0);
        prop_assert!((hausdorff(&a, &b) - hausdorff(&b, &a)).abs() <= SLACK);
        prop_assert!(hausdorff(&a, &c) <= hausdorff(&a, &b) + hausdorff(&b, &c) + SLACK);
    }

    #[test]
    fn shrink_keeps_the_margin(d in set_2d(), eps in 0.01..0.05f64, x in pt()) {
        let inner = d.shrink(eps).unwrap();
        let p = inner.project(&x);
        prop_assert!(d.dist_to_boundary(&p) >= eps - SLACK);
    }

    #[test]
    fn mixed_instances_obey_every_law(seed in any::<u64>()) {
        let mut t = LawTally::default();
        check_instance(seed, &mut t);
        prop_assert_eq!(t.violations(), 0, "{:?}", t);
    }
}

#[test]
fn simplex_projection_matches_grid_argmin() {
    // Brute-force minimization of |z - y| over a dense grid of the simplex.
    let simplex = ConvexSet::new_halfspaces(
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
        vec![0.0, 0.0, 1.0],
        vec![0.25, 0.25],
    )
    .unwrap();
    let y = [2.0, -1.0];
    let n = 2000;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let z = [i as f64 / n as f64, j as f64 / n as f64];
            let d = dist(&z, &y);
            if d < best.0 {
                best = (d, z);
            }
        }
    }
    let p = simplex.project(&y);
    assert!(dist(&p, &best.1) <= 1.0 / n as f64);
    assert_eq!(p, vec![1.0, 0.0]);
}
