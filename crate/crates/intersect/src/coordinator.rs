//! Shared record of committed trajectories, crossing times and lane order.
//!
//! Every mutation bumps a version counter. Planners read a snapshot, and a
//! commit made against an outdated version is rejected so the caller replans.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::planner::{feasible_exit_range, speed_extremes, Candidate, CubicTrajectory, Limits, PlanError};
use crate::scenario::{conflict_distance, ConflictId, PathId, ScenarioConfig, ScenarioError, VehicleId};

#[derive(Debug, Error, PartialEq)]
pub enum CoordError {
    #[error("snapshot version {expected} is stale; database is at {actual}")]
    StaleSnapshot { expected: u64, actual: u64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A committed plan and the conflict crossing times it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Commit {
    pub vehicle: VehicleId,
    pub path_id: PathId,
    pub arrival: f64,
    pub traj: CubicTrajectory,
    /// `(conflict, time)` in path order.
    pub crossings: Vec<(ConflictId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntervalKind {
    RearEnd,
    Lateral,
}

/// A time window during which a committed vehicle constrains a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveInterval {
    pub kind: IntervalKind,
    pub vehicle: VehicleId,
    pub conflict: Option<ConflictId>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub intervals: Vec<ActiveInterval>,
    pub speed_limit: f64,
    pub version: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoordinatorDb {
    commits: BTreeMap<VehicleId, Commit>,
    registered: BTreeMap<VehicleId, (PathId, f64)>,
    version: u64,
}

impl CoordinatorDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, vehicle: VehicleId) -> Option<&Commit> {
        self.commits.get(&vehicle)
    }

    pub fn commits(&self) -> impl Iterator<Item = &Commit> {
        self.commits.values()
    }

    /// The committed vehicle directly ahead on `path`: the latest arrival
    /// strictly before `(arrival, vehicle)`.
    pub fn predecessor(&self, path: PathId, vehicle: VehicleId, arrival: f64) -> Option<&Commit> {
        self.commits
            .values()
            .filter(|c| c.path_id == path && c.vehicle != vehicle)
            .filter(|c| (c.arrival, c.vehicle) < (arrival, vehicle))
            .max_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.vehicle.cmp(&b.vehicle)))
    }

    pub fn crossing_commits(&self, conflict: ConflictId) -> impl Iterator<Item = &Commit> {
        self.commits.values().filter(move |c| c.crossings.iter().any(|(id, _)| *id == conflict))
    }

    /// Committed crossing order at a conflict point.
    pub fn occupancy(&self, conflict: ConflictId) -> Vec<(VehicleId, f64)> {
        let mut out: Vec<_> =
            self.crossing_commits(conflict).filter_map(|c| c.crossing_time(conflict).map(|t| (c.vehicle, t))).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Records the vehicle's arrival and reports what constrains its path.
    pub fn register_and_query(
        &mut self,
        vehicle: VehicleId,
        path: PathId,
        now: f64,
        config: &ScenarioConfig,
    ) -> Result<QueryResult, CoordError> {
        self.registered.entry(vehicle).or_insert((path, now));
        Ok(QueryResult {
            intervals: self.active_intervals(path, vehicle, now, config)?,
            speed_limit: config.planning_speed_cap(),
            version: self.version,
        })
    }

    fn active_intervals(
        &self,
        path: PathId,
        vehicle: VehicleId,
        now: f64,
        config: &ScenarioConfig,
    ) -> Result<Vec<ActiveInterval>, CoordError> {
        let geom = config.path(path)?;
        let p = &config.params;
        let mut out = Vec::new();
        for c in self.commits.values().filter(|c| c.vehicle != vehicle) {
            if c.path_id == path {
                let end = c.traj.time_at(geom.length).unwrap_or(c.traj.tf);
                if end > now {
                    out.push(ActiveInterval {
                        kind: IntervalKind::RearEnd,
                        vehicle: c.vehicle,
                        conflict: None,
                        start: c.traj.t0.max(now),
                        end,
                    });
                }
                continue;
            }
            for &(conflict, l_mine) in &geom.conflict_points {
                let Ok(l_other) = conflict_distance(config, c.path_id, conflict) else {
                    continue;
                };
                let gamma_tilde = p.gamma + (l_mine - l_other).abs();
                let active =
                    |t: f64| (c.traj.position_ext(t) - l_other).abs() <= p.phi * c.traj.speed_ext(t) + gamma_tilde;
                let reach = p.phi * speed_extremes(&c.traj).1 .0 + gamma_tilde + 1.0;
                for (start, end) in activation_windows(&c.traj, l_other, reach, &active, p.dt) {
                    if end > now {
                        out.push(ActiveInterval {
                            kind: IntervalKind::Lateral,
                            vehicle: c.vehicle,
                            conflict: Some(conflict),
                            start: start.max(now),
                            end,
                        });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.vehicle.cmp(&b.vehicle)));
        Ok(out)
    }

    /// Stores a plan if `expected_version` is current. Crossing times for
    /// conflicts already behind the new plan's start are carried over.
    pub fn commit_trajectory(
        &mut self,
        cand: &Candidate,
        expected_version: u64,
        config: &ScenarioConfig,
    ) -> Result<u64, CoordError> {
        if expected_version != self.version {
            return Err(CoordError::StaleSnapshot { expected: expected_version, actual: self.version });
        }
        let geom = config.path(cand.path_id)?;
        let previous = self.commits.get(&cand.vehicle);
        let crossings = geom
            .conflict_points
            .iter()
            .filter_map(|&(id, l)| {
                cand.traj.time_at(l).or_else(|| previous.and_then(|c| c.crossing_time(id))).map(|t| (id, t))
            })
            .collect();
        self.commits.insert(
            cand.vehicle,
            Commit { vehicle: cand.vehicle, path_id: cand.path_id, arrival: cand.arrival, traj: cand.traj, crossings },
        );
        self.version += 1;
        Ok(self.version)
    }

    pub fn remove(&mut self, vehicle: VehicleId) -> Option<Commit> {
        self.registered.remove(&vehicle);
        let out = self.commits.remove(&vehicle);
        if out.is_some() {
            self.version += 1;
        }
        out
    }
}

/// Maximal windows where `active` holds, scanned at `dt` around the
/// crossing of arclength `l` and refined by bisection. `active` must be
/// false whenever the position is more than `reach_dist` from `l`.
fn activation_windows(
    traj: &CubicTrajectory,
    l: f64,
    reach_dist: f64,
    active: &dyn Fn(f64) -> bool,
    dt: f64,
) -> Vec<(f64, f64)> {
    let Some(tc) = traj.time_at(l.max(traj.position(traj.t0))) else {
        return Vec::new();
    };
    let ((vlo, _), (vhi, _)) = speed_extremes(traj);
    // Outside the window the speed is frozen, so activity cannot extend
    // further than the widest safety distance covered at the slowest speed.
    let reach = (reach_dist + vhi * dt) / vlo.max(1e-3);
    let (lo, hi) = (tc - reach, tc + reach);
    let refine = |mut a: f64, mut b: f64| {
        // `active(a) != active(b)`; returns the switch point.
        let fa = active(a);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if active(m) == fa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start = if active(lo) { Some(lo) } else { None };
    let mut prev = lo;
    let mut t = lo + dt;
    while t <= hi + 1e-12 {
        let now = active(t);
        match (start, now) {
            (None, true) => start = Some(refine(prev, t)),
            (Some(s), false) => {
                out.push((s, refine(prev, t)));
                start = None;
            }
            _ => {}
        }
        prev = t;
        t += dt;
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out
}

/// One vehicle in a lane's first-come-first-served chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainEntry {
    pub vehicle: VehicleId,
    pub path_id: PathId,
    /// Priority weight, the inverse width of the feasible exit range.
    pub omega: f64,
    /// Processing time, the earliest feasible exit time.
    pub processing: f64,
}

impl ChainEntry {
    pub fn from_state(
        vehicle: VehicleId,
        path_id: PathId,
        v0: f64,
        remaining: f64,
        limits: &Limits,
    ) -> Result<Self, PlanError> {
        let r = feasible_exit_range(v0, remaining, limits)?;
        let width = (r.t_upper - r.t_lower).max(1e-9);
        Ok(ChainEntry { vehicle, path_id, omega: 1.0 / width, processing: r.t_lower })
    }
}

/// Orders vehicles across lanes while keeping each lane's order.
///
/// Repeatedly takes the lane prefix with the largest weight-to-time ratio;
/// ties go to the lower path id. `entries` must list each lane front to back.
pub fn resequence(entries: &[ChainEntry]) -> Vec<VehicleId> {
    let mut chains: BTreeMap<PathId, Vec<ChainEntry>> = BTreeMap::new();
    for e in entries {
        chains.entry(e.path_id).or_default().push(*e);
    }
    let mut heads: BTreeMap<PathId, usize> = chains.keys().map(|&k| (k, 0)).collect();
    let mut out = Vec::with_capacity(entries.len());
    loop {
        let mut best: Option<(f64, PathId, usize)> = None;
        for (path, chain) in &chains {
            let head = heads[path];
            let (mut w, mut p) = (0.0, 0.0);
            let mut own: Option<(f64, usize)> = None;
            for (k, e) in chain[head..].iter().enumerate() {
                w += e.omega;
                p += e.processing;
                if own.is_none_or(|(r, _)| w / p > r) {
                    own = Some((w / p, k + 1));
                }
            }
            if let Some((rho, len)) = own {
                if best.is_none_or(|(r, _, _)| rho > r) {
                    best = Some((rho, *path, len));
                }
            }
        }
        let Some((_, path, len)) = best else { break };
        let head = heads.get_mut(&path).expect("chain exists");
        out.extend(chains[&path][*head..*head + len].iter().map(|e| e.vehicle));
        *head += len;
    }
    out
}

/// Random order for vehicles entering in the same step.
pub fn shuffle_simultaneous<R: Rng + ?Sized>(ids: &mut [VehicleId], rng: &mut R) {
    ids.sort_unstable();
    ids.shuffle(rng);
}
