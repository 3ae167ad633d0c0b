//! Longitudinal barrier conditions, each affine in the scalar acceleration.
//!
//! Every builder returns a [`LinearConstraint`] over a one-element decision
//! vector `[u]`; callers that optimize over a larger vector remap it with
//! [`LinearConstraint::embed`]. All class-K functions are the identity.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `coeffs . x >= rhs`
    Ge,
    /// `coeffs . x <= rhs`
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    RearEnd,
    SpeedMax,
    SpeedMin,
    Lateral,
    Pedestrian,
    RoadEdge,
    Steering,
    Jerk,
    SoftLane,
    SoftSpeed,
    AntiOvershoot,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::RearEnd => "RearEnd",
            Tag::SpeedMax => "SpeedMax",
            Tag::SpeedMin => "SpeedMin",
            Tag::Lateral => "Lateral",
            Tag::Pedestrian => "Pedestrian",
            Tag::RoadEdge => "RoadEdge",
            Tag::Steering => "Steering",
            Tag::Jerk => "Jerk",
            Tag::SoftLane => "SoftLane",
            Tag::SoftSpeed => "SoftSpeed",
            Tag::AntiOvershoot => "AntiOvershoot",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        const ALL: [Tag; 11] = [
            Tag::RearEnd,
            Tag::SpeedMax,
            Tag::SpeedMin,
            Tag::Lateral,
            Tag::Pedestrian,
            Tag::RoadEdge,
            Tag::Steering,
            Tag::Jerk,
            Tag::SoftLane,
            Tag::SoftSpeed,
            Tag::AntiOvershoot,
        ];
        ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub sense: Sense,
    pub tag: Tag,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64, tag: Tag) -> Self {
        LinearConstraint { coeffs, rhs, sense, tag }
    }

    /// Nonnegative exactly when `x` satisfies the constraint.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let ax: f64 = self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
        match self.sense {
            Sense::Ge => ax - self.rhs,
            Sense::Le => self.rhs - ax,
        }
    }

    /// The same constraint written as `a . x >= b`.
    pub fn as_ge(&self) -> (Vec<f64>, f64) {
        match self.sense {
            Sense::Ge => (self.coeffs.clone(), self.rhs),
            Sense::Le => (self.coeffs.iter().map(|a| -a).collect(), -self.rhs),
        }
    }

    /// Places coefficient `j` at position `slots[j]` of an `n`-vector.
    pub fn embed(&self, n: usize, slots: &[usize]) -> LinearConstraint {
        let mut coeffs = vec![0.0; n];
        for (a, &k) in self.coeffs.iter().zip(slots) {
            coeffs[k] = *a;
        }
        LinearConstraint { coeffs, ..self.clone() }
    }

    pub fn is_well_formed(&self) -> bool {
        self.rhs.is_finite() && self.coeffs.iter().all(|a| a.is_finite()) && self.coeffs.iter().any(|a| *a != 0.0)
    }

    /// For a one-variable constraint, the implied bound on that variable:
    /// `(value, true)` for an upper bound and `(value, false)` for a lower one.
    pub fn scalar_bound(&self) -> Option<(f64, bool)> {
        let (a, b) = self.as_ge();
        match a.as_slice() {
            [c] if *c > 0.0 => Some((b / c, false)),
            [c] if *c < 0.0 => Some((b / c, true)),
            _ => None,
        }
    }
}

/// Rear-end certificate for follower `i` behind predecessor `k`.
pub fn rear_end_condition(p_i: f64, v_i: f64, p_k: f64, v_k: f64, phi: f64, gamma: f64) -> LinearConstraint {
    let drift = (v_k - v_i) + (p_k - p_i - gamma - phi * v_i);
    LinearConstraint::new(vec![-phi], Sense::Ge, -drift, Tag::RearEnd)
}

/// Rear-end barrier value.
pub fn rear_end_value(p_i: f64, v_i: f64, p_k: f64, phi: f64, gamma: f64) -> f64 {
    p_k - p_i - gamma - phi * v_i
}

/// `u <= v_max - v` and `u >= v_min - v`.
pub fn speed_conditions(v: f64, v_min: f64, v_max: f64) -> [LinearConstraint; 2] {
    [
        LinearConstraint::new(vec![1.0], Sense::Le, v_max - v, Tag::SpeedMax),
        LinearConstraint::new(vec![1.0], Sense::Ge, v_min - v, Tag::SpeedMin),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiParams {
    /// Reaction time (s).
    pub phi: f64,
    /// Standstill distance plus the conflict arclength offset (m).
    pub gamma_tilde: f64,
    /// Entry speed of the later vehicle (m/s).
    pub v0: f64,
    /// Entry-to-conflict arclength of the later vehicle (m).
    pub l: f64,
}

impl PhiParams {
    /// Slope of the reaction-time ramp.
    pub fn slope(&self) -> f64 {
        (self.phi + self.gamma_tilde / self.v0) / self.l
    }
}

/// Reaction-time ramp rising from `-gamma_tilde / v0` at the entry to `phi`
/// at the conflict point. Written so both endpoints come out exact.
pub fn headway_ramp(params: PhiParams, p: f64) -> f64 {
    let r = p / params.l;
    params.phi * r + (params.gamma_tilde / params.v0) * (r - 1.0)
}

/// Lateral barrier value for the later vehicle `i`.
pub fn lateral_value(p_i: f64, v_i: f64, p_k: f64, params: PhiParams) -> f64 {
    (p_k - p_i) - headway_ramp(params, p_i) * v_i - params.gamma_tilde
}

/// Lateral certificate for the later-crossing vehicle `i` against `k`.
pub fn lateral_condition(p_i: f64, v_i: f64, p_k: f64, v_k: f64, params: PhiParams) -> LinearConstraint {
    let ramp = headway_ramp(params, p_i);
    let drift = (v_k - v_i) - params.slope() * v_i * v_i + lateral_value(p_i, v_i, p_k, params);
    LinearConstraint::new(vec![-ramp], Sense::Ge, -drift, Tag::Lateral)
}
