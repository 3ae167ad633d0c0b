mod common;

use common::{
    check_terms, close, directional, pedestrian_run, random_ellipse, random_pedestrian, random_state, rng, ACCEL_FIELD,
    SIGMA,
};
use intersect::dynamics::BicycleState;
use intersect::pedestrian::{
    ellipse_axes, lane_recenter_terms, pedestrian_terms, road_boundary_terms, speed_soft, steering_bound,
    unsafe_set_for, Corridor, EllipseUnsafeSet, U2,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn pedestrian_terms_match_finite_differences() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let s = random_state(&mut r);
        let ped = random_pedestrian(&mut r);
        let ell = unsafe_set_for(&s, &ped, SIGMA, &random_ellipse(&mut r));
        check_terms(|q| pedestrian_terms(q, &ell, SIGMA, 0.2), &s, SIGMA).unwrap();
    }
}

#[test]
fn road_edge_terms_match_finite_differences() {
    let mut r = rng(4);
    for k in 0..1000 {
        let s = random_state(&mut r);
        let corridor = if k % 2 == 0 {
            Corridor::X { left: r.random_range(-20.0..0.0), right: r.random_range(0.0..20.0) }
        } else {
            Corridor::Y { right: r.random_range(-20.0..0.0), left: r.random_range(0.0..20.0) }
        };
        for side in 0..2 {
            check_terms(|q| road_boundary_terms(q, corridor, SIGMA)[side], &s, SIGMA).unwrap();
        }
    }
}

#[test]
fn lane_recenter_terms_match_finite_differences() {
    let mut r = rng(6);
    for _ in 0..1000 {
        let s = random_state(&mut r);
        let (xr, yr) = (r.random_range(-30.0..30.0), r.random_range(-30.0..30.0));
        check_terms(|q| lane_recenter_terms(q, xr, yr, SIGMA), &s, SIGMA).unwrap();
    }
}

#[test]
fn speed_soft_matches_finite_differences() {
    let mut r = rng(8);
    for _ in 0..1000 {
        let s = random_state(&mut r);
        let v_ref = r.random_range(0.0..25.0);
        let c = speed_soft(s.v, v_ref);
        let e = |q: &BicycleState| (q.v - v_ref).powi(2);
        let fd = directional(e, &s, ACCEL_FIELD, common::FD_H);
        assert!(close(c.coeffs[U2], fd, 1e-6, 1.0), "{} vs {fd}", c.coeffs[U2]);
        assert!(close(-c.rhs, e(&s), 1e-12, 1.0));
    }
}

/// Hand expansion of the first two drift derivatives of the ellipse
/// barrier, written out term by term.
fn hand_expansion(s: &BicycleState, ell: &EllipseUnsafeSet) -> (f64, f64) {
    let q1 = SIGMA / 2.0;
    let q2 = s.x + q1 * s.theta.cos() - ell.xc;
    let q3 = s.y + q1 * s.theta.sin() - ell.yc;
    let (sx, cx) = ell.xi.sin_cos();
    let (st, ct) = s.theta.sin_cos();
    let (a2, b2) = (ell.a * ell.a, ell.b * ell.b);
    let m = q2 * cx + q3 * sx;
    let n = q2 * sx - q3 * cx;
    let v = s.v;
    let lf = v * ct * 2.0 * cx * m / a2 + v * ct * 2.0 * sx * n / b2 + v * st * 2.0 * sx * m / a2
        - v * st * 2.0 * cx * n / b2;
    let lf2 = v * ct * 2.0 * cx * cx / a2 + v * ct * 2.0 * sx * sx / b2 + v * st * 2.0 * sx * cx / a2
        - v * st * 2.0 * cx * sx / b2
        + v * ct * 2.0 * cx * sx / a2
        - v * ct * 2.0 * sx * cx / b2
        + v * st * 2.0 * sx * sx / a2
        - v * st * (-2.0 * cx * cx) / b2;
    (lf, lf2)
}

/// The hand expansion's first derivative agrees with the implementation;
/// its second derivative is linear in speed and so disagrees whenever the
/// speed is not 1. The implementation follows the vector fields instead.
#[test]
fn hand_expansion_discrepancy() {
    let mut r = rng(10);
    let mut disagreements = 0;
    for _ in 0..200 {
        let s = BicycleState { v: r.random_range(2.0..25.0), ..random_state(&mut r) };
        let ell = unsafe_set_for(&s, &random_pedestrian(&mut r), SIGMA, &random_ellipse(&mut r));
        let t = pedestrian_terms(&s, &ell, SIGMA, 0.2);
        let (lf, lf2) = hand_expansion(&s, &ell);
        assert!(close(lf, t.lf, 1e-9, 1.0));
        if !close(lf2, t.lf2, 1e-3, 1e-3) {
            disagreements += 1;
        }
    }
    assert_eq!(disagreements, 200);
}

proptest! {
    #[test]
    fn axes_grow_with_each_input(
        seed in any::<u64>(),
        d in 0.0f64..50.0, dd in 0.0f64..10.0,
        v in 0.0f64..25.0, dv in 0.0f64..5.0,
        dvp in 0.0f64..1.0,
    ) {
        let mut r = rng(seed);
        let params = random_ellipse(&mut r);
        let ped = random_pedestrian(&mut r);
        let faster = intersect::pedestrian::PedestrianState { speed: ped.speed + dvp, ..ped };
        let (a, b) = ellipse_axes(&ped, d, v, &params);
        for (a2, b2) in [
            ellipse_axes(&ped, d + dd, v, &params),
            ellipse_axes(&ped, d, v + dv, &params),
            ellipse_axes(&faster, d, v, &params),
        ] {
            prop_assert!(a2 >= a && b2 >= b);
        }
    }

    #[test]
    fn steering_bound_shrinks_with_speed(v in 0.0f64..25.0, dv in 0.0f64..25.0, d0 in 0.1f64..1.2) {
        let v2 = (v + dv).min(25.0);
        prop_assert!(steering_bound(v2, d0, 25.0) <= steering_bound(v, d0, 25.0) + 1e-15);
    }

    /// Judged only while the filter has an admissible input: a pedestrian
    /// walking into a vehicle held at its creeping floor cannot be avoided.
    /// The condition ignores how steering swings the barycenter, so b can
    /// dip slightly below zero in about one run in a thousand. Halving the
    /// step does not shrink the dip; the bound here only catches regressions.
    #[test]
    fn pedestrian_filter_stays_near_clear_while_feasible(seed in any::<u64>()) {
        let run = pedestrian_run(seed);
        prop_assert!(run.initial >= 0.0);
        if run.infeasible_steps == 0 {
            prop_assert!(run.min >= -0.5, "{run:?}");
        }
    }
}

#[test]
fn fifty_pedestrian_runs() {
    for seed in 0..50 {
        let run = pedestrian_run(seed);
        assert!(run.initial >= 0.0 && run.min >= -1e-2, "seed {seed}: {run:?}");
    }
}
