//! Vehicle states and fixed-step explicit Euler integrators.
//!
//! Two views of the same vehicle: a longitudinal double integrator along
//! the path arclength, and a kinematic bicycle in world coordinates whose
//! steering input has already been replaced by `u1 = tan(delta)`.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("steering angle {0} rad outside (-pi/2, pi/2)")]
    Domain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalState {
    /// Arclength from the control-zone entry (m).
    pub p: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicycleState {
    pub x: f64,
    pub y: f64,
    /// Heading in `[-pi, pi)`.
    pub theta: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Transformed steering, `tan(delta)`.
    pub u1: f64,
    /// Longitudinal acceleration (m/s^2).
    pub u2: f64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs.
    if a >= PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn step_double_integrator(state: LongitudinalState, u: f64, dt: f64) -> LongitudinalState {
    LongitudinalState { p: state.p + state.v * dt, v: state.v + u * dt }
}

pub fn step_bicycle(state: BicycleState, input: ControlInput, sigma: f64, dt: f64) -> BicycleState {
    let (s, c) = state.theta.sin_cos();
    BicycleState {
        x: state.x + state.v * c * dt,
        y: state.y + state.v * s * dt,
        theta: normalize_angle(state.theta + state.v / sigma * input.u1 * dt),
        v: state.v + input.u2 * dt,
    }
}

pub fn steering_to_input(delta: f64) -> Result<f64, DynamicsError> {
    if !delta.is_finite() || delta.abs() >= FRAC_PI_2 {
        return Err(DynamicsError::Domain(delta));
    }
    Ok(delta.tan())
}

pub fn input_to_steering(u1: f64) -> f64 {
    u1.atan()
}
