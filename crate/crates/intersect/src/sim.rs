//! Deterministic fixed-step world loop.
//!
//! Each step reads one snapshot of every vehicle, computes all controls from
//! it, records the trace, then integrates. Normal vehicles sample their
//! committed cubic exactly; filtered vehicles integrate the longitudinal
//! double integrator; emergency and recovering vehicles integrate the
//! bicycle model and are projected back onto their path for arclength.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::barriers::{
    lateral_condition, lateral_value, rear_end_condition, speed_conditions, LinearConstraint, PhiParams, Tag,
};
use crate::coordinator::{resequence, shuffle_simultaneous, ChainEntry, CoordError, CoordinatorDb};
use crate::dynamics::{
    input_to_steering, normalize_angle, step_bicycle, step_double_integrator, BicycleState, ControlInput,
    LongitudinalState,
};
use crate::pedestrian::{
    anti_overshoot, b5_value, jerk_bounds, lane_recenter_soft, pedestrian_hocbf, road_boundary_conditions, speed_soft,
    steering_limit, unsafe_set_for, Corridor, DeviationSide, PedestrianState, DIM, U1, U2,
};
use crate::planner::{
    plan_min_time, reference_control, solve_cubic, Candidate, CubicTrajectory, Limits, PlanError, PlanOutcome,
    PlanRequest,
};
use crate::qpsolve::{solve, QuadraticProgram};
use crate::scenario::{conflict_distance, Axis, PathId, ScenarioConfig, VehicleId, VehicleSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("vehicle {vehicle} at t={t}: {source}")]
    Plan { vehicle: VehicleId, t: f64, source: PlanError },
    #[error("vehicle {vehicle} at t={t}: {source}")]
    Coord { vehicle: VehicleId, t: f64, source: CoordError },
    #[error("vehicle {0} is on a path without a road")]
    NoRoad(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Normal,
    Filtered,
    Emergency,
    Recovery,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "Normal",
            Mode::Filtered => "Filtered",
            Mode::Emergency => "Emergency",
            Mode::Recovery => "Recovery",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        [Mode::Normal, Mode::Filtered, Mode::Emergency, Mode::Recovery].into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a vehicle may switch from `from` to `to` between two steps.
/// An emergency may end straight in Normal or Filtered when the vehicle is
/// already aligned with its lane.
pub fn transition_allowed(from: Mode, to: Mode) -> bool {
    use Mode::*;
    from == to
        || matches!(
            (from, to),
            (Normal, Filtered)
                | (Filtered, Normal)
                | (Normal | Filtered, Emergency)
                | (Emergency, Recovery | Normal | Filtered)
                | (Recovery, Normal | Filtered)
        )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub vehicle: VehicleId,
    pub mode: Mode,
    pub p: f64,
    pub v: f64,
    pub u2: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub delta: f64,
    pub b5: Option<f64>,
    pub tags: Vec<Tag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEvent {
    pub t: f64,
    pub vehicle: Option<VehicleId>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub anti_overshoot: bool,
    /// Stop early; the run covers `[0, min(horizon, until)]`.
    pub until: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { anti_overshoot: true, until: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub path_id: PathId,
    pub road_id: u32,
    pub arrival: f64,
    /// Speed at zone entry; anchors the lateral reaction-time ramp.
    pub v_entry: f64,
    pub state: BicycleState,
    /// Arclength along the path (projected when off the centerline).
    pub p: f64,
    /// Signed offset to the right of the lane center.
    pub lateral: f64,
    pub mode: Mode,
    pub mode_since: f64,
    pub plan: Option<CubicTrajectory>,
    pub u_prev: ControlInput,
    pub last_replan: f64,
    pub side: Option<DeviationSide>,
    /// The committed cubic is a safety-filter reference or an emergency
    /// prediction rather than a verified plan.
    pub provisional: bool,
}

/// Pedestrian incursion currently being handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub road_id: u32,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub input: ControlInput,
    pub tags: Vec<Tag>,
    pub fallback: bool,
}

/// What ends a vehicle's emergency, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventExit {
    Stay,
    Recovery,
    Replan,
}

pub struct World {
    config: ScenarioConfig,
    opts: SimOptions,
    index: usize,
    vehicles: Vec<Vehicle>,
    pending: VecDeque<VehicleSpec>,
    db: CoordinatorDb,
    rng: ChaCha8Rng,
    event: Option<Event>,
    queue: VecDeque<VehicleId>,
    pedestrian: Option<PedestrianState>,
    trace: Vec<TraceRecord>,
    log: Vec<LogEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub log: Vec<LogEvent>,
}

const ACTIVE_TOL: f64 = 1e-7;
const SLACK_BOX: f64 = 1e6;

impl World {
    pub fn new(config: ScenarioConfig, opts: SimOptions) -> Self {
        let mut specs = config.vehicles.clone();
        specs.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
        World {
            rng: ChaCha8Rng::seed_from_u64(config.params.seed),
            config,
            opts,
            index: 0,
            vehicles: Vec::new(),
            pending: specs.into(),
            db: CoordinatorDb::new(),
            event: None,
            queue: VecDeque::new(),
            pedestrian: None,
            trace: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.index as f64 * self.config.params.dt
    }

    pub fn end_time(&self) -> f64 {
        let h = self.config.params.horizon;
        self.opts.until.map_or(h, |u| u.min(h))
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn db(&self) -> &CoordinatorDb {
        &self.db
    }

    pub fn event(&self) -> Option<Event> {
        self.event
    }

    pub fn pedestrian(&self) -> Option<PedestrianState> {
        self.pedestrian
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn into_output(self) -> SimOutput {
        SimOutput { trace: self.trace, log: self.log }
    }

    fn note(&mut self, vehicle: Option<VehicleId>, message: impl Into<String>) {
        self.log.push(LogEvent { t: self.time(), vehicle, message: message.into() });
    }

    fn set_mode(&mut self, idx: usize, mode: Mode) {
        let t = self.time();
        let v = &mut self.vehicles[idx];
        if v.mode != mode {
            debug_assert!(transition_allowed(v.mode, mode), "{} -> {}", v.mode, mode);
            let msg = format!("{} -> {}", v.mode, mode);
            v.mode = mode;
            v.mode_since = t;
            let id = v.id;
            self.note(Some(id), msg);
        }
    }

    fn lane_corridor(&self, road_id: u32) -> Option<(Axis, [f64; 2])> {
        self.config.road(road_id).map(|r| (r.axis, r.corridor))
    }

    /// Road whose corridor contains the point, if any.
    fn road_containing(&self, x: f64, y: f64) -> Option<u32> {
        self.config.geometry.roads.iter().find_map(|r| {
            let c = match r.axis {
                Axis::X => x,
                Axis::Y => y,
            };
            (c >= r.corridor[0] && c <= r.corridor[1]).then_some(r.road_id)
        })
    }

    // ---- spawning and planning -------------------------------------------------

    fn spawn_due(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let mut due = Vec::new();
        while self.pending.front().is_some_and(|s| s.arrival <= t + 1e-9) {
            due.push(self.pending.pop_front().expect("front exists"));
        }
        if due.is_empty() {
            return Ok(());
        }
        let mut ids: Vec<VehicleId> = due.iter().map(|s| s.id).collect();
        if ids.len() > 1 {
            shuffle_simultaneous(&mut ids, &mut self.rng);
        }
        for id in ids {
            let spec = due.iter().find(|s| s.id == id).expect("id from due list").clone();
            self.spawn(&spec)?;
        }
        Ok(())
    }

    fn spawn(&mut self, spec: &VehicleSpec) -> Result<(), SimError> {
        let t = self.time();
        let path =
            self.config.path(spec.path_id).map_err(|e| SimError::Plan { vehicle: spec.id, t, source: e.into() })?;
        let [x, y] = path.point_at(0.0);
        let heading = path.travel_heading();
        let road_id = path.road_id;
        self.vehicles.push(Vehicle {
            id: spec.id,
            path_id: spec.path_id,
            road_id,
            arrival: t,
            v_entry: spec.speed,
            state: BicycleState { x, y, theta: heading, v: spec.speed },
            p: 0.0,
            lateral: 0.0,
            mode: Mode::Normal,
            mode_since: t,
            plan: None,
            u_prev: ControlInput::default(),
            last_replan: t,
            side: None,
            provisional: false,
        });
        self.vehicles.sort_by_key(|v| v.id);
        let idx = self.idx_of(spec.id).expect("just pushed");
        self.db.register_and_query(spec.id, spec.path_id, t, &self.config).map_err(|e| SimError::Coord {
            vehicle: spec.id,
            t,
            source: e,
        })?;
        self.note(Some(spec.id), "enter");
        if self.event.is_some_and(|e| e.road_id == road_id) {
            self.vehicles[idx].mode = Mode::Emergency;
            self.note(Some(spec.id), "enter -> Emergency");
            self.commit_emergency_prediction(idx)
        } else {
            self.replan(idx, true)
        }
    }

    fn idx_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok()
    }

    fn commit(&mut self, idx: usize, traj: CubicTrajectory) -> Result<(), SimError> {
        let v = &self.vehicles[idx];
        let cand = Candidate { vehicle: v.id, path_id: v.path_id, arrival: v.arrival, traj };
        let (id, t) = (v.id, self.time());
        self.db.commit_trajectory(&cand, self.db.version(), &self.config).map_err(|e| SimError::Coord {
            vehicle: id,
            t,
            source: e,
        })?;
        self.vehicles[idx].plan = Some(traj);
        Ok(())
    }

    /// Plans from the current state. With `set_mode`, the outcome decides
    /// between Normal and Filtered.
    fn replan(&mut self, idx: usize, set_mode: bool) -> Result<(), SimError> {
        let t = self.time();
        let v = &self.vehicles[idx];
        let length = self.config.path(v.path_id).map(|p| p.length).unwrap_or(0.0);
        self.vehicles[idx].last_replan = t;
        let v = &self.vehicles[idx];
        if length - v.p < 1e-6 {
            return Ok(());
        }
        let req = PlanRequest { vehicle: v.id, path_id: v.path_id, arrival: v.arrival, t0: t, p0: v.p, v0: v.state.v };
        let id = v.id;
        let outcome = match plan_min_time(&req, &self.db, &self.config) {
            Ok(o) => o,
            Err(e) => {
                self.note(Some(id), format!("replan failed: {e}"));
                return Ok(());
            }
        };
        let (traj, mode) = match outcome {
            PlanOutcome::Planned(traj) => (traj, Mode::Normal),
            PlanOutcome::NeedsSafetyFilter { reference } => {
                self.note(Some(id), "no feasible exit time; safety filter engaged");
                (reference, Mode::Filtered)
            }
        };
        self.commit(idx, traj)?;
        self.vehicles[idx].provisional = mode == Mode::Filtered;
        if set_mode {
            self.set_mode(idx, mode);
        }
        Ok(())
    }

    /// Emergency vehicles publish a cubic that reaches the path end at the
    /// emergency speed on average, so crossing traffic can plan around it.
    fn commit_emergency_prediction(&mut self, idx: usize) -> Result<(), SimError> {
        let t = self.time();
        let v = &self.vehicles[idx];
        let length = self.config.path(v.path_id).map(|p| p.length).unwrap_or(0.0);
        let remaining = length - v.p;
        if remaining < 1e-6 {
            return Ok(());
        }
        let tf = t + remaining / self.config.params.emergency_speed;
        let id = v.id;
        let traj = solve_cubic(t, tf, v.p, v.state.v, length, v.path_id).map_err(|e| SimError::Plan {
            vehicle: id,
            t,
            source: e,
        })?;
        self.vehicles[idx].provisional = true;
        self.commit(idx, traj)
    }

    // ---- pedestrian handling ------------------------------------------------

    /// Vehicles that see the pedestrian: within sensing range, ahead along
    /// the path, and with the pedestrian inside their road corridor.
    pub fn detect_pedestrian(&self) -> Vec<VehicleId> {
        let Some(ped) = self.pedestrian else {
            return Vec::new();
        };
        let sigma = self.config.params.sigma;
        self.vehicles
            .iter()
            .filter(|v| {
                let Some((axis, c)) = self.lane_corridor(v.road_id) else {
                    return false;
                };
                let coord = match axis {
                    Axis::X => ped.x,
                    Axis::Y => ped.y,
                };
                if coord < c[0] || coord > c[1] {
                    return false;
                }
                let Ok(path) = self.config.path(v.path_id) else {
                    return false;
                };
                let ahead = path.project(ped.x, ped.y).0 > v.p;
                ahead
                    && crate::pedestrian::barycenter_distance(&v.state, &ped, sigma) <= self.config.params.sensing_range
            })
            .map(|v| v.id)
            .collect()
    }

    /// Puts same-road vehicles into Emergency and queues everyone else for
    /// resequenced replanning.
    pub fn broadcast_and_transition(&mut self, detectors: &[VehicleId]) -> Result<(), SimError> {
        let Some(first) = detectors.first() else {
            return Ok(());
        };
        let Some(ped) = self.pedestrian else {
            return Ok(());
        };
        let road_id = self
            .road_containing(ped.x, ped.y)
            .or_else(|| self.idx_of(*first).map(|i| self.vehicles[i].road_id))
            .ok_or(SimError::NoRoad(*first))?;
        self.event = Some(Event { road_id, start: self.time() });
        self.note(None, format!("pedestrian detected by {detectors:?}; alert on road {road_id}"));

        let mut others = Vec::new();
        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.road_id == road_id {
                if matches!(v.mode, Mode::Normal | Mode::Filtered) {
                    self.set_mode(idx, Mode::Emergency);
                    self.commit_emergency_prediction(idx)?;
                }
            } else if matches!(v.mode, Mode::Normal | Mode::Filtered) {
                others.push(idx);
            }
        }
        let limits = Limits::from_config(&self.config);
        // Chains list each lane front to back.
        others.sort_by(|&a, &b| {
            let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
            va.path_id.cmp(&vb.path_id).then(vb.p.total_cmp(&va.p)).then(va.id.cmp(&vb.id))
        });
        let mut entries = Vec::new();
        let mut stragglers = Vec::new();
        for idx in others {
            let v = &self.vehicles[idx];
            let remaining = self.config.path(v.path_id).map(|p| p.length - v.p).unwrap_or(0.0);
            let speed = v.state.v.clamp(limits.v_min, limits.v_max);
            match ChainEntry::from_state(v.id, v.path_id, speed, remaining, &limits) {
                Ok(e) => entries.push(e),
                Err(_) => stragglers.push(v.id),
            }
        }
        let order = resequence(&entries);
        self.queue = order.into_iter().chain(stragglers).collect();
        Ok(())
    }

    /// The pedestrian while an incursion is being handled; once it has left
    /// the road it no longer constrains anyone.
    fn active_pedestrian(&self) -> Option<PedestrianState> {
        self.event.and(self.pedestrian)
    }

    pub fn end_of_event(&self, idx: usize) -> EventExit {
        let v = &self.vehicles[idx];
        let p = &self.config.params;
        let done = match (self.event, self.pedestrian) {
            (None, _) | (_, None) => true,
            (Some(_), Some(ped)) => self
                .config
                .path(v.path_id)
                .map(|path| v.p - path.project(ped.x, ped.y).0 > p.pass_clearance())
                .unwrap_or(true),
        };
        if !done {
            EventExit::Stay
        } else if self.misaligned(idx) {
            EventExit::Recovery
        } else {
            EventExit::Replan
        }
    }

    fn heading_error(&self, idx: usize) -> f64 {
        let v = &self.vehicles[idx];
        let heading = self.config.path(v.path_id).map(|p| p.travel_heading()).unwrap_or(v.state.theta);
        normalize_angle(v.state.theta - heading).abs()
    }

    fn misaligned(&self, idx: usize) -> bool {
        let p = &self.config.params;
        self.vehicles[idx].lateral.abs() > p.lateral_tolerance || self.heading_error(idx) > p.heading_tolerance
    }

    fn enter_recovery(&mut self, idx: usize) -> Result<(), SimError> {
        self.set_mode(idx, Mode::Recovery);
        let v = &self.vehicles[idx];
        if let (Ok(path), Some(road)) = (self.config.path(v.path_id), self.config.road(v.road_id)) {
            let center = path.lane_lateral_coordinate(road.axis);
            let coord = match road.axis {
                Axis::X => v.state.x,
                Axis::Y => v.state.y,
            };
            self.vehicles[idx].side = Some(if coord > center { DeviationSide::High } else { DeviationSide::Low });
        }
        self.replan(idx, false)
    }

    fn update_modes(&mut self) -> Result<(), SimError> {
        // Event ends when the pedestrian is gone or off the alerted road.
        if let Some(ev) = self.event {
            let on_road = self.pedestrian.and_then(|p| self.road_containing(p.x, p.y)) == Some(ev.road_id);
            if !on_road {
                self.event = None;
                self.note(None, "pedestrian left the road");
            }
        }
        if self.event.is_none() {
            let detectors = self.detect_pedestrian();
            if !detectors.is_empty() {
                self.broadcast_and_transition(&detectors)?;
            }
        }

        let mut exits = Vec::new();
        for idx in 0..self.vehicles.len() {
            match self.vehicles[idx].mode {
                Mode::Emergency => match self.end_of_event(idx) {
                    EventExit::Stay => {}
                    EventExit::Recovery => self.enter_recovery(idx)?,
                    EventExit::Replan => exits.push(idx),
                },
                Mode::Recovery if !self.misaligned(idx) => exits.push(idx),
                _ => {}
            }
        }
        // Simultaneous exits replan in resequenced order.
        if !exits.is_empty() {
            let limits = Limits::from_config(&self.config);
            exits.sort_by(|&a, &b| {
                let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
                va.path_id.cmp(&vb.path_id).then(vb.p.total_cmp(&va.p)).then(va.id.cmp(&vb.id))
            });
            let entries: Vec<ChainEntry> = exits
                .iter()
                .map(|&i| {
                    let v = &self.vehicles[i];
                    let remaining = self.config.path(v.path_id).map(|p| p.length - v.p).unwrap_or(0.0).max(1e-6);
                    ChainEntry::from_state(
                        v.id,
                        v.path_id,
                        v.state.v.clamp(limits.v_min, limits.v_max),
                        remaining,
                        &limits,
                    )
                    .unwrap_or(ChainEntry {
                        vehicle: v.id,
                        path_id: v.path_id,
                        omega: 1e-9,
                        processing: 1e9,
                    })
                })
                .collect();
            for id in resequence(&entries) {
                let idx = self.idx_of(id).expect("exiting vehicle exists");
                self.snap_to_lane(idx);
                self.replan(idx, true)?;
            }
        }

        // Emergency vehicles refresh their published prediction.
        for idx in 0..self.vehicles.len() {
            if self.vehicles[idx].mode == Mode::Emergency {
                self.commit_emergency_prediction(idx)?;
            }
        }

        let t = self.time();
        let period = self.config.params.replan_period;
        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if t - v.last_replan >= period - 1e-9 {
                match v.mode {
                    Mode::Filtered => self.replan(idx, true)?,
                    Mode::Recovery => self.replan(idx, false)?,
                    _ => {}
                }
            }
        }
        while let Some(id) = self.queue.pop_front() {
            if let Some(idx) = self.idx_of(id) {
                if matches!(self.vehicles[idx].mode, Mode::Normal | Mode::Filtered) {
                    self.replan(idx, true)?;
                    break;
                }
            }
        }
        Ok(())
    }

    /// Aligned vehicles leave the bicycle view; the residual offset is
    /// within tolerance and is dropped.
    fn snap_to_lane(&mut self, idx: usize) {
        let v = &self.vehicles[idx];
        if let Ok(path) = self.config.path(v.path_id) {
            let [x, y] = path.point_at(v.p);
            let theta = path.travel_heading();
            let v = &mut self.vehicles[idx];
            v.state = BicycleState { x, y, theta, v: v.state.v };
            v.lateral = 0.0;
            v.side = None;
        }
    }

    // ---- controllers --------------------------------------------------------

    /// Rate of change of a vehicle's arclength; off-axis headings make
    /// bicycle-model vehicles progress slower than their speed.
    fn progress_rate(&self, v: &Vehicle) -> f64 {
        match v.mode {
            Mode::Emergency | Mode::Recovery => {
                let heading = self.config.path(v.path_id).map(|p| p.travel_heading()).unwrap_or(v.state.theta);
                v.state.v * (v.state.theta - heading).cos()
            }
            Mode::Normal | Mode::Filtered => v.state.v,
        }
    }

    /// Longitudinal barrier conditions on the scalar acceleration: speed
    /// bounds, rear-end against the vehicle ahead, and lateral against every
    /// vehicle that crosses a shared conflict first.
    fn longitudinal_constraints(&self, idx: usize) -> Vec<LinearConstraint> {
        let p = &self.config.params;
        let me = &self.vehicles[idx];
        let v = me.state.v;
        let mut out: Vec<LinearConstraint> =
            speed_conditions(v, p.v_min, self.config.planning_speed_cap()).into_iter().collect();

        if let Some(lead) = self
            .vehicles
            .iter()
            .filter(|o| o.path_id == me.path_id && o.id != me.id && o.p > me.p)
            .min_by(|a, b| a.p.total_cmp(&b.p))
        {
            out.push(rear_end_condition(me.p, v, lead.p, self.progress_rate(lead), p.phi, p.gamma));
        }

        let Ok(path) = self.config.path(me.path_id) else {
            return out;
        };
        for &(conflict, l_i) in &path.conflict_points {
            if me.p > l_i {
                continue;
            }
            for other in self.vehicles.iter().filter(|o| o.path_id != me.path_id) {
                let Ok(l_k) = conflict_distance(&self.config, other.path_id, conflict) else {
                    continue;
                };
                if !self.crosses_first(other, l_k, me, conflict) {
                    continue;
                }
                let params = PhiParams {
                    phi: p.phi,
                    gamma_tilde: p.gamma + (l_i - l_k).abs(),
                    v0: me.v_entry.max(p.v_min),
                    l: l_i,
                };
                out.push(lateral_condition(me.p, v, other.p, self.progress_rate(other), params));
            }
        }
        out
    }

    /// Crossing order at a conflict: whoever is already past it; between two
    /// verified plans the earlier committed crossing time; otherwise whoever
    /// is closer to the conflict. Ties go to the lower id.
    fn crosses_first(&self, k: &Vehicle, l_k: f64, i: &Vehicle, conflict: u32) -> bool {
        if k.p >= l_k {
            return true;
        }
        if k.provisional || i.provisional {
            let l_i = conflict_distance(&self.config, i.path_id, conflict).unwrap_or(f64::INFINITY);
            let (dk, di) = (l_k - k.p, l_i - i.p);
            return dk < di || (dk == di && k.id < i.id);
        }
        let tk = self.db.get(k.id).and_then(|c| c.crossing_time(conflict));
        let ti = self.db.get(i.id).and_then(|c| c.crossing_time(conflict));
        match (tk, ti) {
            (Some(a), Some(b)) => a < b || (a == b && k.id < i.id),
            (Some(_), None) => true,
            _ => false,
        }
    }

    fn filtered_control(&self, idx: usize, u_ref: f64) -> ControlOutcome {
        let p = &self.config.params;
        let cons = self.longitudinal_constraints(idx);
        let mut qp = QuadraticProgram::tracking(&[1.0], &[u_ref]).with_bounds(vec![(p.u_min, p.u_max)]);
        for c in &cons {
            qp = qp.with_constraint(c.clone());
        }
        match solve(&qp) {
            Ok(sol) if sol.is_optimal() => ControlOutcome {
                input: ControlInput { u1: 0.0, u2: sol.x[0] },
                tags: active_tags(&qp.constraints, &sol.x),
                fallback: false,
            },
            _ => {
                let v = self.vehicles[idx].state.v;
                ControlOutcome {
                    input: ControlInput { u1: 0.0, u2: p.u_min.max((p.v_min - v) / p.dt) },
                    tags: Vec::new(),
                    fallback: true,
                }
            }
        }
    }

    /// The pointwise QP over `(u1, u2, e, s)` for a vehicle in Emergency or
    /// Recovery.
    pub fn emergency_qp(&self, idx: usize) -> QuadraticProgram {
        let p = &self.config.params;
        let me = &self.vehicles[idx];
        let t = self.time();
        let recovering = me.mode == Mode::Recovery;
        let w = if recovering { p.weights_recovery } else { p.weights_emergency };
        let w = w.map(|x| x.max(p.weight_floor));
        let plan = me.plan;
        let u_ref = plan.map_or(0.0, |c| reference_control(&c, t));
        let v_ref = if recovering { plan.map_or(p.emergency_speed, |c| c.speed_ext(t)) } else { p.emergency_speed };

        // Slot order is (u1, u2, e, s); w pairs (u2 - u_ref), u1, e, s.
        let mut qp = QuadraticProgram::tracking(&[w[1], w[0], w[2], w[3]], &[0.0, u_ref, 0.0, 0.0]).with_bounds(vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (p.u_min, p.u_max),
            (-SLACK_BOX, SLACK_BOX),
            (-SLACK_BOX, SLACK_BOX),
        ]);
        for c in self.longitudinal_constraints(idx) {
            qp = qp.with_constraint(c.embed(DIM, &[U2]));
        }
        let s = &me.state;
        if let Some(ped) = self.active_pedestrian() {
            let ell = unsafe_set_for(s, &ped, p.sigma, &self.config.ellipse_for(me.id));
            qp = qp.with_constraint(pedestrian_hocbf(s, &ell, p.sigma, p.r_b));
        }
        if let Some((axis, c)) = self.lane_corridor(me.road_id) {
            let corridor = match axis {
                Axis::X => Corridor::X { left: c[0], right: c[1] },
                Axis::Y => Corridor::Y { right: c[0], left: c[1] },
            };
            for c in road_boundary_conditions(s, corridor, p.sigma) {
                qp = qp.with_constraint(c);
            }
        }
        for c in steering_limit(s.v, p.delta_max0, p.v_max) {
            qp = qp.with_constraint(c);
        }
        for c in jerk_bounds(me.u_prev.u2, p.dt, p.j_min, p.j_max) {
            qp = qp.with_constraint(c);
        }
        if let Ok(path) = self.config.path(me.path_id) {
            let [xr, yr] = path.point_at(me.p);
            qp = qp.with_constraint(lane_recenter_soft(s, xr, yr, p.sigma));
            if recovering && self.opts.anti_overshoot {
                if let (Some(side), Some(road)) = (me.side, self.config.road(me.road_id)) {
                    let center = path.lane_lateral_coordinate(road.axis);
                    qp = qp.with_constraint(anti_overshoot(
                        s,
                        road.axis == Axis::X,
                        center,
                        side,
                        p.anti_overshoot_margin,
                        p.sigma,
                    ));
                }
            }
        }
        qp.with_constraint(speed_soft(s.v, v_ref))
    }

    pub fn emergency_step(&self, idx: usize) -> ControlOutcome {
        let mut qp = self.emergency_qp(idx);
        let mut sol = solve(&qp).ok().filter(|s| s.is_optimal());
        // A vehicle already swinging across its lane center cannot honour the
        // overshoot barrier; keep steering it home without it.
        if sol.is_none() && qp.constraints.iter().any(|c| c.tag == Tag::AntiOvershoot) {
            qp.constraints.retain(|c| c.tag != Tag::AntiOvershoot);
            sol = solve(&qp).ok().filter(|s| s.is_optimal());
        }
        match sol {
            Some(sol) => ControlOutcome {
                input: ControlInput { u1: sol.x[U1], u2: sol.x[U2] },
                tags: active_tags(&qp.constraints, &sol.x),
                fallback: false,
            },
            None => {
                let p = &self.config.params;
                let me = &self.vehicles[idx];
                let u2 = (me.u_prev.u2 + p.j_min * p.dt).max(p.u_min).max((p.v_min - me.state.v) / p.dt);
                ControlOutcome { input: ControlInput { u1: 0.0, u2 }, tags: Vec::new(), fallback: true }
            }
        }
    }

    fn control_for(&mut self, idx: usize) -> ControlOutcome {
        let t = self.time();
        let me = &self.vehicles[idx];
        match me.mode {
            Mode::Emergency | Mode::Recovery => self.emergency_step(idx),
            Mode::Normal | Mode::Filtered => {
                let u_ref = me.plan.map_or(0.0, |c| reference_control(&c, t));
                if me.mode == Mode::Normal {
                    let cons = self.longitudinal_constraints(idx);
                    if cons.iter().all(|c| c.slack(&[u_ref]) >= -1e-9) {
                        return ControlOutcome {
                            input: ControlInput { u1: 0.0, u2: u_ref },
                            tags: Vec::new(),
                            fallback: false,
                        };
                    }
                    self.set_mode(idx, Mode::Filtered);
                }
                self.filtered_control(idx, u_ref)
            }
        }
    }

    // ---- stepping -----------------------------------------------------------

    /// Advances the world by one step.
    pub fn step_world(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let p = self.config.params.clone();
        self.pedestrian = self.config.pedestrian.sample(t);
        self.spawn_due()?;
        self.update_modes()?;

        let mut controls = Vec::with_capacity(self.vehicles.len());
        for idx in 0..self.vehicles.len() {
            let out = self.control_for(idx);
            if out.fallback {
                let id = self.vehicles[idx].id;
                self.note(Some(id), "QP infeasible; braking fallback");
            }
            controls.push(out);
        }

        for (v, out) in self.vehicles.iter().zip(&controls) {
            let guarded = matches!(v.mode, Mode::Emergency | Mode::Recovery);
            let b5 = self.active_pedestrian().filter(|_| guarded).map(|ped| {
                let ell = unsafe_set_for(&v.state, &ped, p.sigma, &self.config.ellipse_for(v.id));
                b5_value(&v.state, &ell, p.sigma, p.r_b)
            });
            self.trace.push(TraceRecord {
                t,
                vehicle: v.id,
                mode: v.mode,
                p: v.p,
                v: v.state.v,
                u2: out.input.u2,
                x: v.state.x,
                y: v.state.y,
                theta: v.state.theta,
                delta: input_to_steering(out.input.u1),
                b5,
                tags: out.tags.clone(),
            });
        }

        let t_next = (self.index + 1) as f64 * p.dt;
        let mut exited = Vec::new();
        for (v, out) in self.vehicles.iter_mut().zip(&controls) {
            let Ok(path) = self.config.path(v.path_id) else {
                continue;
            };
            match v.mode {
                Mode::Normal => {
                    let plan = v.plan.expect("normal vehicles have a plan");
                    v.p = plan.position_ext(t_next);
                    v.state.v = plan.speed_ext(t_next);
                    let [x, y] = path.point_at(v.p);
                    v.state.x = x;
                    v.state.y = y;
                }
                Mode::Filtered => {
                    let s = step_double_integrator(LongitudinalState { p: v.p, v: v.state.v }, out.input.u2, p.dt);
                    v.p = s.p;
                    v.state.v = s.v;
                    let [x, y] = path.point_at(v.p);
                    v.state.x = x;
                    v.state.y = y;
                }
                Mode::Emergency | Mode::Recovery => {
                    v.state = step_bicycle(v.state, out.input, p.sigma, p.dt);
                    let (s, lat) = path.project(v.state.x, v.state.y);
                    v.p = s;
                    v.lateral = lat;
                }
            }
            v.u_prev = out.input;
            if v.p >= path.length {
                exited.push(v.id);
            }
        }
        self.index += 1;
        for id in exited {
            self.vehicles.retain(|v| v.id != id);
            self.note(Some(id), "exit");
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        let end = self.end_time();
        while self.time() <= end + 1e-9 {
            self.step_world()?;
        }
        Ok(())
    }
}

fn active_tags(constraints: &[LinearConstraint], x: &[f64]) -> Vec<Tag> {
    let mut tags: Vec<Tag> =
        constraints.iter().filter(|c| c.slack(x).abs() <= ACTIVE_TOL * (1.0 + c.rhs.abs())).map(|c| c.tag).collect();
    tags.sort();
    tags.dedup();
    tags
}

pub fn run(config: ScenarioConfig, opts: SimOptions) -> Result<SimOutput, SimError> {
    let mut world = World::new(config, opts);
    world.run_to_end()?;
    Ok(world.into_output())
}

// ---- metrics -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SafetyMetrics {
    /// Minimum rear-end slack `p_k - p_i - phi v_i - gamma`; `None` when no
    /// two vehicles ever share a lane.
    pub min_rear_end: Option<f64>,
    /// Minimum lateral barrier over crossing pairs that entered their safe set.
    pub min_lateral: Option<f64>,
    /// Minimum pedestrian barrier over vehicles that first saw it nonnegative.
    pub min_pedestrian: Option<f64>,
    pub speeds: BTreeMap<VehicleId, Vec<(f64, f64)>>,
}

fn fold_min(acc: Option<f64>, x: f64) -> Option<f64> {
    Some(acc.map_or(x, |a| a.min(x)))
}

/// Per-step rear-end slack minimum over consecutive same-lane pairs.
pub fn rear_end_series(trace: &[TraceRecord], config: &ScenarioConfig) -> Vec<(f64, Option<f64>)> {
    let p = &config.params;
    let path_of: BTreeMap<VehicleId, PathId> = config.vehicles.iter().map(|v| (v.id, v.path_id)).collect();
    let mut out = Vec::new();
    for step in trace.chunk_by(|a, b| a.t == b.t) {
        let mut lanes: BTreeMap<PathId, Vec<&TraceRecord>> = BTreeMap::new();
        for r in step {
            if let Some(&path) = path_of.get(&r.vehicle) {
                lanes.entry(path).or_default().push(r);
            }
        }
        let mut m = None;
        for lane in lanes.values_mut() {
            lane.sort_by(|a, b| b.p.total_cmp(&a.p));
            for w in lane.windows(2) {
                m = fold_min(m, w[0].p - w[1].p - p.phi * w[1].v - p.gamma);
            }
        }
        out.push((step[0].t, m));
    }
    out
}

/// Linear interpolation of `(p, v)` at time `t` within one vehicle's series.
fn sample_at(series: &[&TraceRecord], t: f64) -> Option<(f64, f64)> {
    let k = series.partition_point(|r| r.t < t);
    if k < series.len() && series[k].t == t {
        return Some((series[k].p, series[k].v));
    }
    if k == 0 || k == series.len() {
        return None;
    }
    let (a, b) = (series[k - 1], series[k]);
    let w = (t - a.t) / (b.t - a.t);
    Some((a.p + w * (b.p - a.p), a.v + w * (b.v - a.v)))
}

/// First time a series reaches arclength `l`, interpolated between steps.
fn crossing_time(series: &[&TraceRecord], l: f64) -> Option<f64> {
    let k = series.iter().position(|r| r.p >= l)?;
    if k == 0 {
        return Some(series[0].t);
    }
    let (a, b) = (series[k - 1], series[k]);
    Some(a.t + (l - a.p) / (b.p - a.p) * (b.t - a.t))
}

/// Lateral barrier history of one crossing pair, from the later crosser's
/// point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralTrack {
    pub first: VehicleId,
    pub later: VehicleId,
    /// `(t, b4)` at every step where both are present and the later vehicle
    /// has not reached the conflict.
    pub values: Vec<(f64, f64)>,
}

impl LateralTrack {
    /// Whether the pair started inside its safe set.
    pub fn entered_safe(&self) -> bool {
        self.values.first().is_some_and(|&(_, b)| b >= 0.0)
    }
}

/// Lateral barrier values of every crossing pair, ordered by who actually
/// reached the shared conflict first. Pairs where neither vehicle reached
/// it are skipped.
pub fn lateral_barriers(trace: &[TraceRecord], config: &ScenarioConfig) -> Vec<LateralTrack> {
    let p = &config.params;
    let mut series: BTreeMap<VehicleId, Vec<&TraceRecord>> = BTreeMap::new();
    for r in trace {
        series.entry(r.vehicle).or_default().push(r);
    }
    let mut out = Vec::new();
    let specs = &config.vehicles;
    for (ia, a) in specs.iter().enumerate() {
        for b in &specs[ia + 1..] {
            if a.path_id == b.path_id {
                continue;
            }
            let Ok((_, la, lb)) = config.shared_conflict(a.path_id, b.path_id) else {
                continue;
            };
            let (Some(sa), Some(sb)) = (series.get(&a.id), series.get(&b.id)) else {
                continue;
            };
            let a_first = match (crossing_time(sa, la), crossing_time(sb, lb)) {
                (Some(x), Some(y)) => x < y || (x == y && a.id < b.id),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => continue,
            };
            let (first, sk, later, si, l_k, l_i) =
                if a_first { (a.id, sa, b.id, sb, la, lb) } else { (b.id, sb, a.id, sa, lb, la) };
            let params =
                PhiParams { phi: p.phi, gamma_tilde: p.gamma + (l_i - l_k).abs(), v0: si[0].v.max(p.v_min), l: l_i };
            let values = si
                .iter()
                .take_while(|r| r.p < l_i)
                .filter_map(|r| sample_at(sk, r.t).map(|(pk, _)| (r.t, lateral_value(r.p, r.v, pk, params))))
                .collect();
            out.push(LateralTrack { first, later, values });
        }
    }
    out
}

pub fn compute_metrics(trace: &[TraceRecord], config: &ScenarioConfig) -> SafetyMetrics {
    let mut m = SafetyMetrics::default();
    for (_, s) in rear_end_series(trace, config) {
        if let Some(s) = s {
            m.min_rear_end = fold_min(m.min_rear_end, s);
        }
    }
    for track in lateral_barriers(trace, config).iter().filter(|t| t.entered_safe()) {
        for &(_, b) in &track.values {
            m.min_lateral = fold_min(m.min_lateral, b);
        }
    }
    let mut entered_safe: BTreeMap<VehicleId, bool> = BTreeMap::new();
    for r in trace {
        m.speeds.entry(r.vehicle).or_default().push((r.t, r.v));
        if let Some(b) = r.b5 {
            let safe = *entered_safe.entry(r.vehicle).or_insert(b >= 0.0);
            if safe {
                m.min_pedestrian = fold_min(m.min_pedestrian, b);
            }
        }
    }
    m
}

/// First illegal mode change in a trace, as `(t, vehicle, from, to)`.
pub fn validate_modes(trace: &[TraceRecord]) -> Result<(), (f64, VehicleId, Mode, Mode)> {
    let mut last: BTreeMap<VehicleId, Mode> = BTreeMap::new();
    for r in trace {
        if let Some(prev) = last.insert(r.vehicle, r.mode) {
            if !transition_allowed(prev, r.mode) {
                return Err((r.t, r.vehicle, prev, r.mode));
            }
        }
    }
    Ok(())
}
