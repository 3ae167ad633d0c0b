//! Energy-optimal cubic trajectories and the minimum-exit-time search.
//!
//! The unconstrained optimum with free terminal speed and zero terminal
//! acceleration is a cubic in absolute time. The exit time is found by
//! scanning upward from the earliest reachable exit in steps of `dt` until a
//! cubic passes every constraint against the committed trajectories.

use thiserror::Error;

use crate::coordinator::{Commit, CoordinatorDb};
use crate::scenario::{conflict_distance, ConflictId, PathId, ScenarioConfig, VehicleId};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("window {0} s too short for a cubic")]
    SingularSystem(f64),
    #[error("entry speed {0} m/s outside the speed limits")]
    InfeasibleEntry(f64),
    #[error("remaining distance {0} m must be positive")]
    NoDistance(f64),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// `p(t) = phi3 t^3 + phi2 t^2 + phi1 t + phi0` on `[t0, tf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicTrajectory {
    pub phi3: f64,
    pub phi2: f64,
    pub phi1: f64,
    pub phi0: f64,
    pub t0: f64,
    pub tf: f64,
    pub path_id: PathId,
}

impl CubicTrajectory {
    pub fn position(&self, t: f64) -> f64 {
        ((self.phi3 * t + self.phi2) * t + self.phi1) * t + self.phi0
    }

    pub fn speed(&self, t: f64) -> f64 {
        (3.0 * self.phi3 * t + 2.0 * self.phi2) * t + self.phi1
    }

    pub fn control(&self, t: f64) -> f64 {
        6.0 * self.phi3 * t + 2.0 * self.phi2
    }

    /// Position with constant-speed extension outside the window, matching
    /// how a vehicle enters at its entry speed and leaves with zero
    /// acceleration.
    pub fn position_ext(&self, t: f64) -> f64 {
        if t < self.t0 {
            self.position(self.t0) + self.speed(self.t0) * (t - self.t0)
        } else if t > self.tf {
            self.position(self.tf) + self.speed(self.tf) * (t - self.tf)
        } else {
            self.position(t)
        }
    }

    pub fn speed_ext(&self, t: f64) -> f64 {
        self.speed(t.clamp(self.t0, self.tf))
    }

    /// Time the trajectory reaches arclength `s`, extending past the window
    /// at constant speed. `None` when `s` is behind the start or unreachable.
    pub fn time_at(&self, s: f64) -> Option<f64> {
        let p0 = self.position(self.t0);
        if s < p0 {
            return None;
        }
        let pf = self.position(self.tf);
        if s > pf {
            let vf = self.speed(self.tf);
            return (vf > 0.0).then(|| self.tf + (s - pf) / vf);
        }
        let (mut lo, mut hi) = (self.t0, self.tf);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.position(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

pub fn solve_cubic(t0: f64, tf: f64, p0: f64, v0: f64, pf: f64, path_id: PathId) -> Result<CubicTrajectory, PlanError> {
    let span = tf - t0;
    if !(span >= 1e-9) {
        return Err(PlanError::SingularSystem(span));
    }
    // Shifted form a tau^3 + b tau^2 + v0 tau + p0 with u(span) = 0.
    let a = (v0 * span - (pf - p0)) / (2.0 * span * span * span);
    let b = -3.0 * a * span;
    Ok(CubicTrajectory {
        phi3: a,
        phi2: b - 3.0 * a * t0,
        phi1: (3.0 * a * t0 - 2.0 * b) * t0 + v0,
        phi0: ((-a * t0 + b) * t0 - v0) * t0 + p0,
        t0,
        tf,
        path_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleRange {
    pub t_lower: f64,
    pub t_upper: f64,
}

/// Kinematic limits the planner works against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Limits {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let p = &config.params;
        Limits { v_min: p.v_min, v_max: config.planning_speed_cap(), u_min: p.u_min, u_max: p.u_max }
    }
}

/// Time to cover `dist` starting at `v0`, accelerating at `accel` until
/// `target` speed is reached and holding it afterward.
fn bang_then_cruise(v0: f64, dist: f64, accel: f64, target: f64) -> f64 {
    if v0 == target || accel == 0.0 {
        return dist / v0;
    }
    let ramp_t = (target - v0) / accel;
    let ramp_d = 0.5 * (v0 + target) * ramp_t;
    if ramp_d >= dist {
        // Smallest positive root of v0 t + accel t^2 / 2 = dist.
        let disc = (v0 * v0 + 2.0 * accel * dist).max(0.0);
        return 2.0 * dist / (v0 + disc.sqrt());
    }
    ramp_t + (dist - ramp_d) / target
}

pub fn feasible_exit_range(v0: f64, dist: f64, limits: &Limits) -> Result<FeasibleRange, PlanError> {
    if !(v0 >= limits.v_min - 1e-9 && v0 <= limits.v_max + 1e-9) || !(v0 > 0.0) {
        return Err(PlanError::InfeasibleEntry(v0));
    }
    if !(dist > 0.0) {
        return Err(PlanError::NoDistance(dist));
    }
    let fast_accel = if v0 < limits.v_max { limits.u_max } else { limits.u_min };
    let t_lower = bang_then_cruise(v0, dist, fast_accel, limits.v_max);
    let t_upper = bang_then_cruise(v0, dist, limits.u_min, limits.v_min.max(1e-9)).max(t_lower);
    Ok(FeasibleRange { t_lower, t_upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    SpeedMax,
    SpeedMin,
    InputMax,
    InputMin,
    RearEnd,
    Lateral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Ok,
    Violation(ViolationKind, f64),
}

/// A trajectory proposal together with the identity it would be committed as.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub vehicle: VehicleId,
    pub path_id: PathId,
    /// Control-zone arrival time, which fixes the order within a lane.
    pub arrival: f64,
    pub traj: CubicTrajectory,
}

/// Extremes of the quadratic speed on the window, with their times.
pub(crate) fn speed_extremes(traj: &CubicTrajectory) -> ((f64, f64), (f64, f64)) {
    let mut lo = (traj.speed(traj.t0), traj.t0);
    let mut hi = lo;
    let mut consider = |t: f64| {
        let v = traj.speed(t);
        if v < lo.0 {
            lo = (v, t);
        }
        if v > hi.0 {
            hi = (v, t);
        }
    };
    consider(traj.tf);
    if traj.phi3 != 0.0 {
        let tv = -traj.phi2 / (3.0 * traj.phi3);
        if tv > traj.t0 && tv < traj.tf {
            consider(tv);
        }
    }
    (lo, hi)
}

/// Sample times `t0, t0 + dt, ..., tf`.
fn samples(t0: f64, tf: f64, dt: f64) -> impl Iterator<Item = f64> {
    let n = ((tf - t0) / dt).ceil().max(0.0) as usize;
    let count = if tf >= t0 { n + 1 } else { 0 };
    (0..count).map(move |k| if k == n { tf } else { t0 + k as f64 * dt })
}

pub fn check_feasible(cand: &Candidate, db: &CoordinatorDb, config: &ScenarioConfig) -> Feasibility {
    scan_feasibility(cand, db, config, false)
}

/// With `stop_early` the first violation found is returned instead of the
/// earliest one; the verdict is the same.
fn scan_feasibility(cand: &Candidate, db: &CoordinatorDb, config: &ScenarioConfig, stop_early: bool) -> Feasibility {
    let p = &config.params;
    let limits = Limits::from_config(config);
    let traj = &cand.traj;
    let tol = 1e-9;
    let mut first: Option<(ViolationKind, f64)> = None;
    fn note(first: &mut Option<(ViolationKind, f64)>, kind: ViolationKind, t: f64) {
        if first.is_none_or(|(k, ft)| t < ft || (t == ft && kind < k)) {
            *first = Some((kind, t));
        }
    }

    let ((vlo, tlo), (vhi, thi)) = speed_extremes(traj);
    if vhi > limits.v_max + tol {
        note(&mut first, ViolationKind::SpeedMax, thi);
    }
    if vlo < limits.v_min - tol {
        note(&mut first, ViolationKind::SpeedMin, tlo);
    }
    // The control is affine, so its extremes sit at the window ends.
    for t in [traj.t0, traj.tf] {
        let u = traj.control(t);
        if u > limits.u_max + tol {
            note(&mut first, ViolationKind::InputMax, t);
        }
        if u < limits.u_min - tol {
            note(&mut first, ViolationKind::InputMin, t);
        }
    }

    if stop_early {
        if let Some((k, t)) = first {
            return Feasibility::Violation(k, t);
        }
    }

    if let Some(lead) = db.predecessor(cand.path_id, cand.vehicle, cand.arrival) {
        // The leader leaves the zone at the end of its window.
        for t in samples(traj.t0, traj.tf.min(lead.traj.tf), p.dt) {
            let gap = lead.traj.position_ext(t) - traj.position(t);
            if gap - p.phi * traj.speed(t) - p.gamma < -tol {
                note(&mut first, ViolationKind::RearEnd, t);
                break;
            }
        }
    }

    if let Ok(path) = config.path(cand.path_id) {
        for &(conflict, l_mine) in &path.conflict_points {
            let Some(t_mine) = traj.time_at(l_mine) else {
                continue;
            };
            for other in db.crossing_commits(conflict) {
                if other.vehicle == cand.vehicle {
                    continue;
                }
                let Some(t_other) = other.crossing_time(conflict) else {
                    continue;
                };
                let Ok(l_other) = conflict_distance(config, other.path_id, conflict) else {
                    continue;
                };
                let gamma_tilde = p.gamma + (l_mine - l_other).abs();
                let tn = t_mine.min(t_other);
                if tn < traj.t0 {
                    continue;
                }
                let later_speed = if t_mine >= t_other { traj.speed_ext(tn) } else { other.traj.speed_ext(tn) };
                let gap = (other.traj.position_ext(tn) - traj.position_ext(tn)).abs();
                if gap - p.phi * later_speed - gamma_tilde < -tol {
                    note(&mut first, ViolationKind::Lateral, tn);
                }
            }
        }
    }

    match first {
        None => Feasibility::Ok,
        Some((k, t)) => Feasibility::Violation(k, t),
    }
}

/// Where a vehicle stands when it asks for a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub vehicle: VehicleId,
    pub path_id: PathId,
    pub arrival: f64,
    pub t0: f64,
    pub p0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanOutcome {
    Planned(CubicTrajectory),
    /// No grid exit time works; `reference` is the earliest-exit cubic,
    /// usable as the tracking target of a safety filter.
    NeedsSafetyFilter {
        reference: CubicTrajectory,
    },
}

pub fn plan_min_time(req: &PlanRequest, db: &CoordinatorDb, config: &ScenarioConfig) -> Result<PlanOutcome, PlanError> {
    let path = config.path(req.path_id)?;
    let dist = path.length - req.p0;
    let limits = Limits::from_config(config);
    // Mid-zone replans can start marginally outside the band after braking.
    let range = feasible_exit_range(req.v0.clamp(limits.v_min, limits.v_max), dist, &limits)?;
    let dt = config.params.dt;
    let steps = ((range.t_upper - range.t_lower) / dt).floor() as usize;
    let reference = solve_cubic(req.t0, req.t0 + range.t_lower, req.p0, req.v0, path.length, req.path_id)?;
    for k in 0..=steps {
        let tf = req.t0 + range.t_lower + k as f64 * dt;
        let traj = solve_cubic(req.t0, tf, req.p0, req.v0, path.length, req.path_id)?;
        let cand = Candidate { vehicle: req.vehicle, path_id: req.path_id, arrival: req.arrival, traj };
        if scan_feasibility(&cand, db, config, true) == Feasibility::Ok {
            return Ok(PlanOutcome::Planned(traj));
        }
    }
    Ok(PlanOutcome::NeedsSafetyFilter { reference })
}

/// Planned acceleration; zero once the window has ended.
pub fn reference_control(traj: &CubicTrajectory, t: f64) -> f64 {
    if t > traj.tf {
        0.0
    } else {
        traj.control(t.max(traj.t0))
    }
}

impl Commit {
    pub fn crossing_time(&self, conflict: ConflictId) -> Option<f64> {
        self.crossings.iter().find(|(c, _)| *c == conflict).map(|(_, t)| *t)
    }
}
