//! Emergency-mode constraint builders over the decision vector
//! `(u1, u2, e, s)`: the pedestrian ellipse barrier, road edges, steering
//! and jerk limits, and the two soft constraints.
//!
//! Second-order conditions follow `Lf^2 b + Lg1Lf b u1 + Lg2Lf b u2 + 2 Lf b + b >= 0`
//! with drift `f = (v cos th, v sin th, 0, 0)` and input fields
//! `g1 = (0, 0, v/sigma, 0)`, `g2 = (0, 0, 0, 1)`. The Lie derivatives are
//! worked out by hand below and checked against finite differences in tests.

use serde::{Deserialize, Serialize};

use crate::barriers::{LinearConstraint, Sense, Tag};
use crate::dynamics::BicycleState;

/// Decision vector layout of the emergency QP.
pub const U1: usize = 0;
pub const U2: usize = 1;
pub const E: usize = 2;
pub const S: usize = 3;
pub const DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    /// Walking direction in `[-pi, pi)`.
    pub xi: f64,
}

/// Conservativeness knobs of the unsafe set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    /// Standstill clearance, the smallest semi-major axis (m).
    pub epsilon: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Ratio of major to minor axis.
    pub lambda: f64,
}

impl EllipseParams {
    /// Returns the offending field name on failure.
    pub fn validate(&self) -> Result<(), &'static str> {
        let fields =
            [("epsilon", self.epsilon), ("k1", self.k1), ("k2", self.k2), ("k3", self.k3), ("lambda", self.lambda)];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(name);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseUnsafeSet {
    pub xc: f64,
    pub yc: f64,
    /// Semi-major axis, along `xi`.
    pub a: f64,
    pub b: f64,
    pub xi: f64,
}

pub fn ellipse_axes(ped: &PedestrianState, d: f64, v: f64, params: &EllipseParams) -> (f64, f64) {
    let a = params.epsilon + (ped.speed / params.k1) * (d / params.k2) * (v / params.k3);
    (a, a / params.lambda)
}

/// Centre shifted half an axis ahead of the pedestrian, so the pedestrian
/// sits in the rear half.
pub fn ellipse_center(ped: &PedestrianState, a: f64) -> (f64, f64) {
    let (s, c) = ped.xi.sin_cos();
    (ped.x + 0.5 * a * c, ped.y + 0.5 * a * s)
}

/// Distance from the vehicle barycenter to the pedestrian.
pub fn barycenter_distance(state: &BicycleState, ped: &PedestrianState, sigma: f64) -> f64 {
    let (s, c) = state.theta.sin_cos();
    (state.x + 0.5 * sigma * c - ped.x).hypot(state.y + 0.5 * sigma * s - ped.y)
}

/// The ellipse seen by one vehicle at its current state.
pub fn unsafe_set_for(
    state: &BicycleState,
    ped: &PedestrianState,
    sigma: f64,
    params: &EllipseParams,
) -> EllipseUnsafeSet {
    let d = barycenter_distance(state, ped, sigma);
    let (a, b) = ellipse_axes(ped, d, state.v.max(0.0), params);
    let (xc, yc) = ellipse_center(ped, a);
    EllipseUnsafeSet { xc, yc, a, b, xi: ped.xi }
}

/// Quadratic-form pieces of the ellipse barrier at one state.
struct EllipseForm {
    /// Barycenter offset from the centre.
    q: [f64; 2],
    /// Gradient with respect to the barycenter.
    grad: [f64; 2],
    /// Constant Hessian with respect to the barycenter.
    hess: [[f64; 2]; 2],
}

impl EllipseForm {
    fn new(state: &BicycleState, ell: &EllipseUnsafeSet, sigma: f64) -> Self {
        let (st, ct) = state.theta.sin_cos();
        let q = [state.x + 0.5 * sigma * ct - ell.xc, state.y + 0.5 * sigma * st - ell.yc];
        let (sx, cx) = ell.xi.sin_cos();
        let ia = 1.0 / (ell.a * ell.a);
        let ib = 1.0 / (ell.b * ell.b);
        let m = q[0] * cx + q[1] * sx;
        let n = q[0] * sx - q[1] * cx;
        let grad = [2.0 * (m * cx * ia + n * sx * ib), 2.0 * (m * sx * ia - n * cx * ib)];
        let h01 = 2.0 * sx * cx * (ia - ib);
        let hess = [[2.0 * (cx * cx * ia + sx * sx * ib), h01], [h01, 2.0 * (sx * sx * ia + cx * cx * ib)]];
        EllipseForm { q, grad, hess }
    }

    fn value(&self, ell: &EllipseUnsafeSet) -> f64 {
        let (sx, cx) = ell.xi.sin_cos();
        let m = self.q[0] * cx + self.q[1] * sx;
        let n = self.q[0] * sx - self.q[1] * cx;
        m * m / (ell.a * ell.a) + n * n / (ell.b * ell.b)
    }
}

fn quad(h: &[[f64; 2]; 2], u: [f64; 2], w: [f64; 2]) -> f64 {
    u[0] * (h[0][0] * w[0] + h[0][1] * w[1]) + u[1] * (h[1][0] * w[0] + h[1][1] * w[1])
}

pub fn b5_value(state: &BicycleState, ell: &EllipseUnsafeSet, sigma: f64, r_b: f64) -> f64 {
    EllipseForm::new(state, ell, sigma).value(ell) - 1.0 - r_b
}

/// Lie-derivative terms of a second-order barrier at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderTerms {
    pub b: f64,
    pub lf: f64,
    pub lf2: f64,
    pub lg1lf: f64,
    pub lg2lf: f64,
}

impl SecondOrderTerms {
    /// `Lf^2 b + Lg1Lf b u1 + Lg2Lf b u2 + 2 Lf b + b >= 0` over `(u1, u2, e, s)`.
    pub fn condition(&self, tag: Tag) -> LinearConstraint {
        let mut coeffs = vec![0.0; DIM];
        coeffs[U1] = self.lg1lf;
        coeffs[U2] = self.lg2lf;
        LinearConstraint::new(coeffs, Sense::Ge, -(self.lf2 + 2.0 * self.lf + self.b), tag)
    }
}

pub fn pedestrian_terms(state: &BicycleState, ell: &EllipseUnsafeSet, sigma: f64, r_b: f64) -> SecondOrderTerms {
    let form = EllipseForm::new(state, ell, sigma);
    let (st, ct) = state.theta.sin_cos();
    let v = state.v;
    let heading = [ct, st];
    // Derivative of the barycenter with respect to theta.
    let dq_dtheta = [-0.5 * sigma * st, 0.5 * sigma * ct];
    let along = form.grad[0] * ct + form.grad[1] * st;
    let lf = v * along;
    let lf2 = v * v * quad(&form.hess, heading, heading);
    let dlf_dtheta = v * (quad(&form.hess, heading, dq_dtheta) + form.grad[1] * ct - form.grad[0] * st);
    SecondOrderTerms { b: form.value(ell) - 1.0 - r_b, lf, lf2, lg1lf: dlf_dtheta * v / sigma, lg2lf: along }
}

pub fn pedestrian_hocbf(state: &BicycleState, ell: &EllipseUnsafeSet, sigma: f64, r_b: f64) -> LinearConstraint {
    pedestrian_terms(state, ell, sigma, r_b).condition(Tag::Pedestrian)
}

/// Terms for `b = sign * (coord - bound)` where `coord` is x or y.
fn edge_terms(state: &BicycleState, axis_x: bool, bound: f64, sign: f64, sigma: f64) -> SecondOrderTerms {
    let (st, ct) = state.theta.sin_cos();
    let v = state.v;
    let (coord, rate, drate) = if axis_x { (state.x, ct, -st) } else { (state.y, st, ct) };
    SecondOrderTerms {
        b: sign * (coord - bound),
        lf: sign * v * rate,
        lf2: 0.0,
        lg1lf: sign * v * v * drate / sigma,
        lg2lf: sign * rate,
    }
}

/// Lateral corridor of a road, in world coordinates on one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corridor {
    /// `x_left <= x <= x_right`
    X { left: f64, right: f64 },
    /// `y_right <= y <= y_left`
    Y { right: f64, left: f64 },
}

pub fn road_boundary_terms(state: &BicycleState, corridor: Corridor, sigma: f64) -> [SecondOrderTerms; 2] {
    match corridor {
        Corridor::X { left, right } => {
            [edge_terms(state, true, left, 1.0, sigma), edge_terms(state, true, right, -1.0, sigma)]
        }
        Corridor::Y { right, left } => {
            [edge_terms(state, false, right, 1.0, sigma), edge_terms(state, false, left, -1.0, sigma)]
        }
    }
}

pub fn road_boundary_conditions(state: &BicycleState, corridor: Corridor, sigma: f64) -> [LinearConstraint; 2] {
    road_boundary_terms(state, corridor, sigma).map(|t| t.condition(Tag::RoadEdge))
}

/// `|u1| <= tan(|delta_max0 (1 - v / v_max)|)`.
pub fn steering_bound(v: f64, delta_max0: f64, v_max: f64) -> f64 {
    (delta_max0 * (1.0 - v / v_max)).abs().tan()
}

pub fn steering_limit(v: f64, delta_max0: f64, v_max: f64) -> [LinearConstraint; 2] {
    let bound = steering_bound(v, delta_max0, v_max);
    let mut c = vec![0.0; DIM];
    c[U1] = 1.0;
    [
        LinearConstraint::new(c.clone(), Sense::Le, bound, Tag::Steering),
        LinearConstraint::new(c, Sense::Ge, -bound, Tag::Steering),
    ]
}

/// Interval the next acceleration may occupy.
pub fn jerk_interval(u2_prev: f64, dt: f64, j_min: f64, j_max: f64) -> (f64, f64) {
    (u2_prev + j_min * dt, u2_prev + j_max * dt)
}

pub fn jerk_bounds(u2_prev: f64, dt: f64, j_min: f64, j_max: f64) -> [LinearConstraint; 2] {
    let (lo, hi) = jerk_interval(u2_prev, dt, j_min, j_max);
    let mut c = vec![0.0; DIM];
    c[U2] = 1.0;
    [LinearConstraint::new(c.clone(), Sense::Ge, lo, Tag::Jerk), LinearConstraint::new(c, Sense::Le, hi, Tag::Jerk)]
}

/// Terms of the squared distance to a fixed reference point.
pub fn lane_recenter_terms(state: &BicycleState, x_ref: f64, y_ref: f64, sigma: f64) -> SecondOrderTerms {
    let (st, ct) = state.theta.sin_cos();
    let v = state.v;
    let (dx, dy) = (state.x - x_ref, state.y - y_ref);
    SecondOrderTerms {
        b: dx * dx + dy * dy,
        lf: 2.0 * (dx * v * ct + dy * v * st),
        lf2: 2.0 * v * v,
        lg1lf: v * 2.0 * (-dx * v * st + dy * v * ct) / sigma,
        lg2lf: 2.0 * (dx * ct + dy * st),
    }
}

/// `Lf^2 E + Lg1Lf E u1 + Lg2Lf E u2 + 2 Lf E + E <= e`.
pub fn lane_recenter_soft(state: &BicycleState, x_ref: f64, y_ref: f64, sigma: f64) -> LinearConstraint {
    let t = lane_recenter_terms(state, x_ref, y_ref, sigma);
    let mut coeffs = vec![0.0; DIM];
    coeffs[U1] = t.lg1lf;
    coeffs[U2] = t.lg2lf;
    coeffs[E] = -1.0;
    LinearConstraint::new(coeffs, Sense::Le, -(t.lf2 + 2.0 * t.lf + t.b), Tag::SoftLane)
}

/// `2 (v - v_ref) u2 + (v - v_ref)^2 <= s`.
pub fn speed_soft(v: f64, v_ref: f64) -> LinearConstraint {
    let dv = v - v_ref;
    let mut coeffs = vec![0.0; DIM];
    coeffs[U2] = 2.0 * dv;
    coeffs[S] = -1.0;
    LinearConstraint::new(coeffs, Sense::Le, -dv * dv, Tag::SoftSpeed)
}

/// Which side of the lane center a vehicle drifted to, on the road's
/// lateral world axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationSide {
    /// Drifted toward larger coordinate values.
    High,
    /// Drifted toward smaller coordinate values.
    Low,
}

/// Edge-style barrier that lets the vehicle return to the lane center but
/// not run more than `mu` past it.
pub fn anti_overshoot(
    state: &BicycleState,
    lateral_axis_x: bool,
    lane_center: f64,
    side: DeviationSide,
    mu: f64,
    sigma: f64,
) -> LinearConstraint {
    let t = match side {
        DeviationSide::High => edge_terms(state, lateral_axis_x, lane_center - mu, 1.0, sigma),
        DeviationSide::Low => edge_terms(state, lateral_axis_x, lane_center + mu, -1.0, sigma),
    };
    t.condition(Tag::AntiOvershoot)
}
