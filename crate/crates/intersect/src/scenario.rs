//! Intersection geometry and the declarative scenario document.
//!
//! A scenario is a TOML document with four sections: `geometry`,
//! `vehicles`, `pedestrian` and `params`. Paths are straight, axis-aligned
//! lane centerlines; each one belongs to a road whose corridor bounds the
//! lateral coordinate. Conflict points are given in world coordinates and
//! their arclengths along every incident path are derived at load time.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::normalize_angle;
use crate::pedestrian::{EllipseParams, PedestrianState};

pub type PathId = u32;
pub type ConflictId = u32;
pub type VehicleId = u32;

/// Tolerance for "this point lies on that centerline" checks.
const ON_PATH_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("conflict {conflict} is not on path {path}")]
    NotOnPath { path: PathId, conflict: ConflictId },
    #[error("paths {0} and {1} share no conflict point")]
    NoSharedConflict(PathId, PathId),
    #[error("unknown path {0}")]
    UnknownPath(PathId),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), reason: reason.into() }
}

/// World axis that carries a road's lateral coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub road_id: u32,
    /// Lateral axis: `x` for roads running along y, and vice versa.
    pub axis: Axis,
    /// Corridor bounds `[low, high]` on the lateral axis (m).
    pub corridor: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGeometry {
    pub path_id: PathId,
    pub road_id: u32,
    /// Road reference point at the control-zone entry.
    pub entry_point: [f64; 2],
    /// Travel direction; must be a multiple of pi/2.
    pub heading: f64,
    /// Lane center distance to the right of `entry_point`, across the heading.
    pub lane_center_offset: f64,
    /// Control-zone traversal length (m).
    pub length: f64,
    /// `(conflict_id, arclength)` sorted by arclength; derived on load.
    #[serde(skip)]
    pub conflict_points: Vec<(ConflictId, f64)>,
}

impl PathGeometry {
    /// Unit travel direction, snapped to the axis.
    pub fn direction(&self) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [c.round(), s.round()]
    }

    /// Unit normal pointing to the right of travel.
    pub fn right_normal(&self) -> [f64; 2] {
        let [dx, dy] = self.direction();
        [dy, -dx]
    }

    /// Lane-center point at the control-zone entry.
    pub fn lane_origin(&self) -> [f64; 2] {
        let n = self.right_normal();
        [self.entry_point[0] + self.lane_center_offset * n[0], self.entry_point[1] + self.lane_center_offset * n[1]]
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let o = self.lane_origin();
        let d = self.direction();
        [o[0] + s * d[0], o[1] + s * d[1]]
    }

    /// Arclength of the projection onto the centerline and the signed
    /// lateral offset (positive to the right of travel).
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let o = self.lane_origin();
        let d = self.direction();
        let n = self.right_normal();
        let (rx, ry) = (x - o[0], y - o[1]);
        (rx * d[0] + ry * d[1], rx * n[0] + ry * n[1])
    }

    /// Heading snapped into `[-pi, pi)`.
    pub fn travel_heading(&self) -> f64 {
        let [dx, dy] = self.direction();
        normalize_angle(dy.atan2(dx))
    }

    /// World coordinate of the lane center on the road's lateral axis.
    pub fn lane_lateral_coordinate(&self, axis: Axis) -> f64 {
        let o = self.lane_origin();
        match axis {
            Axis::X => o[0],
            Axis::Y => o[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub conflict_id: ConflictId,
    pub position: [f64; 2],
    pub paths: Vec<PathId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Control-zone range (m); informational, paths carry their own length.
    pub control_zone: f64,
    /// Intersection speed limit S handed out by the coordinator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_limit: Option<f64>,
    pub roads: Vec<Road>,
    pub paths: Vec<PathGeometry>,
    #[serde(default)]
    pub conflicts: Vec<ConflictPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub path_id: PathId,
    /// Control-zone arrival time (s).
    pub arrival: f64,
    /// Entry speed (m/s).
    pub speed: f64,
    /// Per-vehicle unsafe-set tuning; falls back to `params.ellipse`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipse: Option<EllipseParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Piecewise-linear pedestrian motion. The pedestrian exists only between
/// the first and last waypoint times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PedestrianScript {
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
}

impl PedestrianScript {
    pub fn sample(&self, t: f64) -> Option<PedestrianState> {
        let w = &self.waypoints;
        if w.is_empty() || t < w[0].t || t > w[w.len() - 1].t {
            return None;
        }
        if w.len() == 1 {
            return Some(PedestrianState { x: w[0].x, y: w[0].y, speed: 0.0, xi: 0.0 });
        }
        let k = w.windows(2).position(|s| t < s[1].t).unwrap_or(w.len() - 2);
        let (a, b) = (w[k], w[k + 1]);
        let span = b.t - a.t;
        let alpha = if span > 0.0 { ((t - a.t) / span).clamp(0.0, 1.0) } else { 1.0 };
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let dist = dx.hypot(dy);
        let speed = if span > 0.0 { dist / span } else { 0.0 };
        Some(PedestrianState { x: a.x + alpha * dx, y: a.y + alpha * dy, speed, xi: self.orientation_at(k) })
    }

    /// Orientation of segment `k`, inheriting from earlier segments while
    /// the pedestrian stands still.
    fn orientation_at(&self, k: usize) -> f64 {
        for j in (0..=k).rev() {
            let (a, b) = (self.waypoints[j], self.waypoints[j + 1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            if dx != 0.0 || dy != 0.0 {
                return normalize_angle(dy.atan2(dx));
            }
        }
        0.0
    }
}

fn default_mu() -> f64 {
    0.05
}
fn default_lateral_tol() -> f64 {
    0.05
}
fn default_heading_tol() -> f64 {
    0.01
}
fn default_weight_floor() -> f64 {
    1e-3
}
fn default_replan_period() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Reaction time (s).
    pub phi: f64,
    /// Standstill distance (m).
    pub gamma: f64,
    /// Wheelbase (m).
    pub sigma: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub j_min: f64,
    pub j_max: f64,
    pub dt: f64,
    /// Simulated horizon (s).
    pub horizon: f64,
    /// Default unsafe-set tuning.
    pub ellipse: EllipseParams,
    /// Margin added to the unit level set of the ellipse.
    pub r_b: f64,
    /// Weights on `(u2 - u_ref)^2, u1^2, e^2, s^2` while in Emergency.
    pub weights_emergency: [f64; 4],
    /// Same weights while in Recovery.
    pub weights_recovery: [f64; 4],
    /// Zero weights are raised to this value so each QP has one minimizer.
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
    pub emergency_speed: f64,
    pub sensing_range: f64,
    /// Steering limit at standstill (rad).
    pub delta_max0: f64,
    pub seed: u64,
    /// Lane-center margin for the recovery overshoot barrier (m).
    #[serde(default = "default_mu")]
    pub anti_overshoot_margin: f64,
    #[serde(default = "default_lateral_tol")]
    pub lateral_tolerance: f64,
    #[serde(default = "default_heading_tol")]
    pub heading_tolerance: f64,
    /// Distance past the pedestrian that ends a vehicle's emergency (m);
    /// defaults to the ellipse standstill distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_clearance: Option<f64>,
    /// Minimum spacing between replanning attempts of a filtered vehicle (s).
    #[serde(default = "default_replan_period")]
    pub replan_period: f64,
}

impl ControllerParams {
    pub fn pass_clearance(&self) -> f64 {
        self.pass_clearance.unwrap_or(self.ellipse.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub geometry: Geometry,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub pedestrian: PedestrianScript,
    pub params: ControllerParams,
}

impl ScenarioConfig {
    pub fn path(&self, path_id: PathId) -> Result<&PathGeometry, ScenarioError> {
        self.geometry.paths.iter().find(|p| p.path_id == path_id).ok_or(ScenarioError::UnknownPath(path_id))
    }

    pub fn road(&self, road_id: u32) -> Option<&Road> {
        self.geometry.roads.iter().find(|r| r.road_id == road_id)
    }

    pub fn road_of(&self, path_id: PathId) -> Option<&Road> {
        self.path(path_id).ok().and_then(|p| self.road(p.road_id))
    }

    pub fn ellipse_for(&self, vehicle: VehicleId) -> EllipseParams {
        self.vehicles.iter().find(|v| v.id == vehicle).and_then(|v| v.ellipse).unwrap_or(self.params.ellipse)
    }

    /// Speed cap used for planning: the tighter of `v_max` and `S`.
    pub fn planning_speed_cap(&self) -> f64 {
        self.geometry.speed_limit.map_or(self.params.v_max, |s| s.min(self.params.v_max))
    }

    /// Shared conflicts between two paths, as `(conflict_id, L_a, L_b)`.
    pub fn shared_conflict(&self, path_a: PathId, path_b: PathId) -> Result<(ConflictId, f64, f64), ScenarioError> {
        let a = self.path(path_a)?;
        let b = self.path(path_b)?;
        for &(id, la) in &a.conflict_points {
            if let Some(&(_, lb)) = b.conflict_points.iter().find(|(c, _)| *c == id) {
                return Ok((id, la, lb));
            }
        }
        Err(ScenarioError::NoSharedConflict(path_a, path_b))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    fn validate(&mut self) -> Result<(), ScenarioError> {
        validate_params(&self.params)?;
        if let Some(s) = self.geometry.speed_limit {
            if !(s > self.params.v_min) {
                return Err(invalid("speed_limit", "must exceed v_min"));
            }
        }

        let mut roads = BTreeSet::new();
        for r in &self.geometry.roads {
            if !roads.insert(r.road_id) {
                return Err(invalid("road_id", format!("duplicate road {}", r.road_id)));
            }
            if !(r.corridor[0] < r.corridor[1]) {
                return Err(invalid("corridor", format!("road {} needs low < high", r.road_id)));
            }
        }

        let mut ids = BTreeSet::new();
        for p in &mut self.geometry.paths {
            if !ids.insert(p.path_id) {
                return Err(invalid("path_id", format!("duplicate path {}", p.path_id)));
            }
            let quarter = p.heading / FRAC_PI_2;
            if !p.heading.is_finite() || (quarter - quarter.round()).abs() > 1e-9 {
                return Err(invalid("heading", format!("path {} is not axis-aligned", p.path_id)));
            }
            if !(p.length > 0.0) {
                return Err(invalid("length", format!("path {} must be positive", p.path_id)));
            }
            let road = self
                .geometry
                .roads
                .iter()
                .find(|r| r.road_id == p.road_id)
                .ok_or_else(|| invalid("road_id", format!("path {} names unknown road", p.path_id)))?;
            let along_lateral = match road.axis {
                Axis::X => p.direction()[0] == 0.0,
                Axis::Y => p.direction()[1] == 0.0,
            };
            if !along_lateral {
                return Err(invalid("axis", format!("path {} crosses its road's axis", p.path_id)));
            }
            let lat = p.lane_lateral_coordinate(road.axis);
            if lat < road.corridor[0] || lat > road.corridor[1] {
                return Err(invalid(
                    "lane_center_offset",
                    format!("path {} lane lies outside its corridor", p.path_id),
                ));
            }
            p.conflict_points.clear();
        }

        let mut conflict_ids = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for c in &self.geometry.conflicts {
            if !conflict_ids.insert(c.conflict_id) {
                return Err(invalid("conflict_id", format!("duplicate conflict {}", c.conflict_id)));
            }
            let mut incident: Vec<PathId> = c.paths.clone();
            incident.sort_unstable();
            incident.dedup();
            if incident.len() < 2 {
                return Err(invalid("paths", format!("conflict {} needs two paths", c.conflict_id)));
            }
            for (i, a) in incident.iter().enumerate() {
                for b in &incident[i + 1..] {
                    if !pairs.insert((*a, *b)) {
                        return Err(invalid(
                            "conflicts",
                            format!("paths {a} and {b} share more than one conflict point"),
                        ));
                    }
                }
            }
            for pid in &incident {
                let path = self
                    .geometry
                    .paths
                    .iter_mut()
                    .find(|p| p.path_id == *pid)
                    .ok_or(ScenarioError::UnknownPath(*pid))?;
                let (s, lateral) = path.project(c.position[0], c.position[1]);
                if lateral.abs() > ON_PATH_TOL {
                    return Err(ScenarioError::NotOnPath { path: *pid, conflict: c.conflict_id });
                }
                if !(s > 0.0 && s < path.length) {
                    return Err(invalid(
                        "position",
                        format!("conflict {} outside path {} control zone", c.conflict_id, pid),
                    ));
                }
                path.conflict_points.push((c.conflict_id, s));
            }
        }
        for p in &mut self.geometry.paths {
            p.conflict_points.sort_by(|a, b| a.1.total_cmp(&b.1));
            if p.conflict_points.windows(2).any(|w| !(w[1].1 > w[0].1)) {
                return Err(invalid("conflicts", format!("path {} has coincident conflict points", p.path_id)));
            }
        }

        let mut vehicle_ids = BTreeSet::new();
        let mut last_arrival: BTreeMap<PathId, f64> = BTreeMap::new();
        for v in &self.vehicles {
            if !vehicle_ids.insert(v.id) {
                return Err(invalid("id", format!("duplicate vehicle {}", v.id)));
            }
            self.path(v.path_id)?;
            if !(v.arrival >= 0.0) {
                return Err(invalid("arrival", format!("vehicle {} arrives before t = 0", v.id)));
            }
            if let Some(prev) = last_arrival.insert(v.path_id, v.arrival) {
                if !(v.arrival > prev) {
                    return Err(invalid("arrival", format!("vehicle {} out of order on path {}", v.id, v.path_id)));
                }
            }
            if !(v.speed >= self.params.v_min && v.speed <= self.params.v_max) {
                return Err(invalid("speed", format!("vehicle {} entry speed out of range", v.id)));
            }
            if let Some(e) = v.ellipse {
                e.validate().map_err(|f| invalid(f, format!("vehicle {} ellipse", v.id)))?;
            }
        }

        let w = &self.pedestrian.waypoints;
        if w.iter().any(|p| !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite())) {
            return Err(invalid("waypoints", "non-finite entry"));
        }
        if w.windows(2).any(|s| !(s[1].t > s[0].t)) {
            return Err(invalid("waypoints", "times must increase"));
        }
        Ok(())
    }
}

fn validate_params(p: &ControllerParams) -> Result<(), ScenarioError> {
    let finite = [
        ("phi", p.phi),
        ("gamma", p.gamma),
        ("sigma", p.sigma),
        ("v_min", p.v_min),
        ("v_max", p.v_max),
        ("u_min", p.u_min),
        ("u_max", p.u_max),
        ("j_min", p.j_min),
        ("j_max", p.j_max),
        ("dt", p.dt),
        ("horizon", p.horizon),
        ("r_b", p.r_b),
        ("emergency_speed", p.emergency_speed),
        ("sensing_range", p.sensing_range),
        ("delta_max0", p.delta_max0),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            return Err(invalid(name, "must be finite"));
        }
    }
    if !(p.v_min < p.v_max) {
        return Err(invalid("v_min", "must be below v_max"));
    }
    if p.v_min < 0.0 {
        return Err(invalid("v_min", "must be nonnegative"));
    }
    if !(p.u_min < 0.0) {
        return Err(invalid("u_min", "must be negative"));
    }
    if !(p.u_max > 0.0) {
        return Err(invalid("u_max", "must be positive"));
    }
    if !(p.j_min < 0.0) {
        return Err(invalid("j_min", "must be negative"));
    }
    if !(p.j_max > 0.0) {
        return Err(invalid("j_max", "must be positive"));
    }
    if !(p.dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(p.horizon >= 0.0) {
        return Err(invalid("horizon", "must be nonnegative"));
    }
    if !(p.phi > 0.0) {
        return Err(invalid("phi", "must be positive"));
    }
    if !(p.gamma >= 0.0) {
        return Err(invalid("gamma", "must be nonnegative"));
    }
    if !(p.sigma > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    if !(p.r_b >= 0.0) {
        return Err(invalid("r_b", "must be nonnegative"));
    }
    if !(p.sensing_range > 0.0) {
        return Err(invalid("sensing_range", "must be positive"));
    }
    if !(p.delta_max0 > 0.0 && p.delta_max0 < FRAC_PI_2) {
        return Err(invalid("delta_max0", "must lie in (0, pi/2)"));
    }
    if !(p.emergency_speed >= p.v_min && p.emergency_speed <= p.v_max) {
        return Err(invalid("emergency_speed", "must lie in [v_min, v_max]"));
    }
    for (name, w) in [("weights_emergency", p.weights_emergency), ("weights_recovery", p.weights_recovery)] {
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid(name, "weights must be finite and nonnegative"));
        }
    }
    if !(p.weight_floor > 0.0 && p.weight_floor.is_finite()) {
        return Err(invalid("weight_floor", "must be positive"));
    }
    for (name, v) in [
        ("anti_overshoot_margin", p.anti_overshoot_margin),
        ("lateral_tolerance", p.lateral_tolerance),
        ("heading_tolerance", p.heading_tolerance),
        ("replan_period", p.replan_period),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(name, "must be finite and nonnegative"));
        }
    }
    if let Some(c) = p.pass_clearance {
        if !(c >= 0.0) {
            return Err(invalid("pass_clearance", "must be nonnegative"));
        }
    }
    p.ellipse.validate().map_err(|f| invalid(f, "default ellipse"))?;
    Ok(())
}

pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Arclength `L_z^n` of a conflict point along a path.
pub fn conflict_distance(
    config: &ScenarioConfig,
    path_id: PathId,
    conflict_id: ConflictId,
) -> Result<f64, ScenarioError> {
    config
        .path(path_id)?
        .conflict_points
        .iter()
        .find(|(c, _)| *c == conflict_id)
        .map(|(_, s)| *s)
        .ok_or(ScenarioError::NotOnPath { path: path_id, conflict: conflict_id })
}

/// Difference between the two paths' distances to their shared conflict.
pub fn zeta(config: &ScenarioConfig, path_a: PathId, path_b: PathId) -> Result<f64, ScenarioError> {
    let (_, la, lb) = config.shared_conflict(path_a, path_b)?;
    Ok((la - lb).abs())
}
