//! Oracles and closed-loop harnesses shared by the property suites and the
//! acceptance runner. Everything here is written independently of the
//! library internals it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use intersect::barriers::{
    lateral_condition, lateral_value, rear_end_condition, rear_end_value, LinearConstraint, PhiParams, Sense, Tag,
};
use intersect::coordinator::ChainEntry;
use intersect::dynamics::{step_bicycle, step_double_integrator, BicycleState, ControlInput, LongitudinalState};
use intersect::pedestrian::{
    b5_value, pedestrian_hocbf, pedestrian_terms, road_boundary_conditions, steering_limit, unsafe_set_for, Corridor,
    EllipseParams, PedestrianState, SecondOrderTerms, DIM, U1, U2,
};
use intersect::qpsolve::{solve, QuadraticProgram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PHI: f64 = 1.8;
pub const GAMMA: f64 = 1.5;
pub const SIGMA: f64 = 2.0;
pub const V_MIN: f64 = 0.1;
pub const V_MAX: f64 = 25.0;
pub const U_MIN: f64 = -5.0;
pub const U_MAX: f64 = 5.0;
pub const DT: f64 = 0.025;
pub const R_B: f64 = 0.2;
pub const DELTA_MAX0: f64 = 0.6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- cubic boundary residuals ------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct BoundaryTuple {
    pub t0: f64,
    pub tf: f64,
    pub p0: f64,
    pub v0: f64,
    pub pf: f64,
}

pub fn boundary_tuple(r: &mut impl Rng) -> BoundaryTuple {
    let t0 = r.random_range(0.0..20.0);
    let p0 = r.random_range(0.0..50.0);
    BoundaryTuple {
        t0,
        tf: t0 + r.random_range(0.5..30.0),
        p0,
        v0: r.random_range(V_MIN..V_MAX),
        pf: p0 + r.random_range(1.0..150.0),
    }
}

/// Largest boundary residual: position and speed at the start, position and
/// acceleration at the end.
pub fn cubic_residual(b: &BoundaryTuple) -> f64 {
    let c = intersect::planner::solve_cubic(b.t0, b.tf, b.p0, b.v0, b.pf, 1).expect("window is nondegenerate");
    [c.position(b.t0) - b.p0, c.speed(b.t0) - b.v0, c.position(b.tf) - b.pf, c.control(b.tf)]
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}

// ---- ramp endpoints -----------------------------------------------------------

pub fn phi_params(r: &mut impl Rng) -> PhiParams {
    PhiParams {
        phi: r.random_range(0.5..3.0),
        gamma_tilde: r.random_range(0.5..10.0),
        v0: r.random_range(V_MIN..V_MAX),
        l: r.random_range(5.0..150.0),
    }
}

// ---- QP oracle comparison -----------------------------------------------------

/// Boxed strongly convex program with rows built around a known feasible
/// point.
pub fn feasible_qp(r: &mut impl Rng) -> QuadraticProgram {
    let n = r.random_range(1..=3);
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let inside: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut qp = QuadraticProgram::tracking(&weights, &targets).with_bounds(vec![(-4.0, 4.0); n]);
    for _ in 0..r.random_range(0..=3) {
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let at: f64 = a.iter().zip(&inside).map(|(a, x)| a * x).sum();
        let rhs = at - r.random_range(0.0..1.0);
        let sense = if r.random_bool(0.5) { Sense::Ge } else { Sense::Le };
        let c = match sense {
            Sense::Ge => LinearConstraint::new(a, Sense::Ge, rhs, Tag::SpeedMax),
            Sense::Le => LinearConstraint::new(a.iter().map(|v| -v).collect(), Sense::Le, -rhs, Tag::SpeedMax),
        };
        qp = qp.with_constraint(c);
    }
    qp
}

/// Program with no feasible point, either from a contradictory pair of
/// rows or from a row that no point of the box reaches.
pub fn infeasible_qp(r: &mut impl Rng, contradictory_pair: bool) -> QuadraticProgram {
    let n = r.random_range(1..=3);
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut qp = QuadraticProgram::tracking(&weights, &targets).with_bounds(vec![(-4.0, 4.0); n]);
    let mut a: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    a[0] = r.random_range(0.5..2.0);
    let gap = r.random_range(0.05..1.0);
    if contradictory_pair {
        let rhs = r.random_range(-1.0..1.0);
        qp = qp
            .with_constraint(LinearConstraint::new(a.clone(), Sense::Ge, rhs + gap, Tag::SpeedMax))
            .with_constraint(LinearConstraint::new(a, Sense::Le, rhs, Tag::SpeedMin));
    } else {
        let reach: f64 = a.iter().map(|v| 4.0 * v.abs()).sum();
        qp = qp.with_constraint(LinearConstraint::new(a, Sense::Ge, reach + gap, Tag::SpeedMax));
    }
    qp
}

/// Objective change the oracle's final grid can hide: gradient bound over
/// the box times the finest cell diagonal. The window shrinks by
/// `2 max(cells / 4, 2) / cells` per level.
pub fn grid_bound(qp: &QuadraticProgram, cells: usize, refinements: usize) -> f64 {
    let n = qp.dim() as f64;
    let shrink = 2.0 * (cells / 4).max(2) as f64 / cells as f64;
    let mut grad = 0.0f64;
    let mut step = 0.0f64;
    for i in 0..qp.dim() {
        let (lo, hi) = qp.bounds[i];
        let g = (2.0 * qp.weights[i] * lo + qp.linear[i]).abs().max((2.0 * qp.weights[i] * hi + qp.linear[i]).abs());
        grad = grad.max(g);
        step = step.max((hi - lo) / cells as f64 * shrink.powi(refinements as i32));
    }
    grad * step * n.sqrt()
}

// ---- Lie-derivative finite differences ----------------------------------------

pub const FD_H: f64 = 1e-6;

/// Central difference of `g` along a direction in `(x, y, theta, v)`.
pub fn directional(g: impl Fn(&BicycleState) -> f64, s: &BicycleState, d: [f64; 4], h: f64) -> f64 {
    let shift =
        |k: f64| BicycleState { x: s.x + k * d[0], y: s.y + k * d[1], theta: s.theta + k * d[2], v: s.v + k * d[3] };
    (g(&shift(h)) - g(&shift(-h))) / (2.0 * h)
}

pub fn drift_field(s: &BicycleState) -> [f64; 4] {
    [s.v * s.theta.cos(), s.v * s.theta.sin(), 0.0, 0.0]
}

pub fn steer_field(s: &BicycleState, sigma: f64) -> [f64; 4] {
    [0.0, 0.0, s.v / sigma, 0.0]
}

pub const ACCEL_FIELD: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

/// `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// Compares each stored derivative with a central difference of the term
/// one order below it. Returns the first mismatch.
pub fn check_terms(
    terms: impl Fn(&BicycleState) -> SecondOrderTerms,
    s: &BicycleState,
    sigma: f64,
) -> Result<(), String> {
    let t = terms(s);
    let f = drift_field(s);
    let checks = [
        ("lf", t.lf, directional(|q| terms(q).b, s, f, FD_H)),
        ("lf2", t.lf2, directional(|q| terms(q).lf, s, f, FD_H)),
        ("lg1lf", t.lg1lf, directional(|q| terms(q).lf, s, steer_field(s, sigma), FD_H)),
        ("lg2lf", t.lg2lf, directional(|q| terms(q).lf, s, ACCEL_FIELD, FD_H)),
    ];
    for (name, analytic, fd) in checks {
        if !close(analytic, fd, 1e-6, 1.0) {
            return Err(format!("{name}: analytic {analytic} vs difference {fd} at {s:?}"));
        }
    }
    Ok(())
}

pub fn random_state(r: &mut impl Rng) -> BicycleState {
    BicycleState {
        x: r.random_range(-30.0..30.0),
        y: r.random_range(-30.0..30.0),
        theta: r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        v: r.random_range(0.0..V_MAX),
    }
}

pub fn random_pedestrian(r: &mut impl Rng) -> PedestrianState {
    PedestrianState {
        x: r.random_range(-10.0..10.0),
        y: r.random_range(-10.0..10.0),
        speed: r.random_range(0.0..2.0),
        xi: r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    }
}

pub fn random_ellipse(r: &mut impl Rng) -> EllipseParams {
    EllipseParams {
        epsilon: r.random_range(1.0..3.0),
        k1: r.random_range(0.5..2.0),
        k2: r.random_range(5.0..20.0),
        k3: r.random_range(3.0..10.0),
        lambda: r.random_range(1.0..3.0),
    }
}

// ---- closed-loop invariance -----------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Invariance {
    pub initial: f64,
    pub min: f64,
    /// Steps where the filter had no feasible input.
    pub infeasible_steps: usize,
}

/// Largest input the barrier row and speed limits allow, within the
/// actuator box. When nothing is admissible, the input in the box that
/// violates the barrier row least.
fn tightest_longitudinal(barrier: LinearConstraint, v: f64) -> (f64, bool) {
    let lo = U_MIN.max(V_MIN - v);
    let hi = U_MAX.min(V_MAX - v).max(lo);
    let qp = QuadraticProgram::tracking(&[1.0], &[U_MAX]).with_bounds(vec![(lo, hi)]).with_constraint(barrier.clone());
    match solve(&qp) {
        Ok(sol) if sol.is_optimal() => (sol.x[0], true),
        _ => {
            let u = if barrier.slack(&[hi]) >= barrier.slack(&[lo]) { hi } else { lo };
            (u, false)
        }
    }
}

/// Piecewise-constant random acceleration for a lead vehicle, redrawn every
/// second, holding its speed inside `[v_lo, v_hi]`.
struct LeadProfile {
    accel: f64,
    next_switch: f64,
    lo: f64,
    hi: f64,
    v_lo: f64,
    v_hi: f64,
}

impl LeadProfile {
    fn input(&mut self, r: &mut impl Rng, t: f64, v: f64) -> f64 {
        if t >= self.next_switch {
            self.accel = r.random_range(self.lo..self.hi);
            self.next_switch += 1.0;
        }
        self.accel.clamp((self.v_lo - v) / DT, (self.v_hi - v) / DT)
    }
}

/// Follower maximizing its acceleration under the rear-end filter behind a
/// randomly driven leader, for 30 s.
pub fn rear_end_run(seed: u64) -> Invariance {
    let mut r = rng(seed);
    let mut lead = LongitudinalState { p: r.random_range(15.0..60.0), v: r.random_range(2.0..15.0) };
    let cap = ((lead.p - GAMMA) / PHI).min(15.0);
    let mut me = LongitudinalState { p: 0.0, v: r.random_range(V_MIN.max(cap * 0.3)..cap.max(V_MIN + 0.1)) };
    let mut profile = LeadProfile { accel: 0.0, next_switch: 0.0, lo: -3.0, hi: 2.0, v_lo: V_MIN, v_hi: V_MAX };
    let initial = rear_end_value(me.p, me.v, lead.p, PHI, GAMMA);
    let mut out = Invariance { initial, min: initial, infeasible_steps: 0 };
    let steps = (30.0 / DT).round() as usize;
    for k in 0..steps {
        let t = k as f64 * DT;
        let a_lead = profile.input(&mut r, t, lead.v);
        let (u, ok) = tightest_longitudinal(rear_end_condition(me.p, me.v, lead.p, lead.v, PHI, GAMMA), me.v);
        out.infeasible_steps += usize::from(!ok);
        me = step_double_integrator(me, u, DT);
        lead = step_double_integrator(lead, a_lead, DT);
        out.min = out.min.min(rear_end_value(me.p, me.v, lead.p, PHI, GAMMA));
    }
    out
}

/// Later crosser maximizing its acceleration under the lateral filter
/// against a randomly driven first crosser, until it reaches the conflict.
pub fn lateral_run(seed: u64) -> Invariance {
    let mut r = rng(seed);
    let l_i = r.random_range(40.0..100.0);
    let zeta = if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..5.0) };
    let v0 = r.random_range(3.0..15.0);
    let params = PhiParams { phi: PHI, gamma_tilde: GAMMA + zeta, v0, l: l_i };
    let mut first = LongitudinalState { p: r.random_range(0.0..30.0), v: r.random_range(3.0..15.0) };
    let mut me = LongitudinalState { p: 0.0, v: v0 };
    let mut profile = LeadProfile { accel: 0.0, next_switch: 0.0, lo: -1.0, hi: 2.0, v_lo: 2.0, v_hi: 15.0 };
    let initial = lateral_value(me.p, me.v, first.p, params);
    let mut out = Invariance { initial, min: initial, infeasible_steps: 0 };
    let steps = (30.0 / DT).round() as usize;
    for k in 0..steps {
        if me.p >= l_i {
            break;
        }
        let t = k as f64 * DT;
        let a_first = profile.input(&mut r, t, first.v);
        let (u, ok) = tightest_longitudinal(lateral_condition(me.p, me.v, first.p, first.v, params), me.v);
        out.infeasible_steps += usize::from(!ok);
        me = step_double_integrator(me, u, DT);
        first = step_double_integrator(first, a_first, DT);
        if me.p < l_i {
            out.min = out.min.min(lateral_value(me.p, me.v, first.p, params));
        }
    }
    out
}

/// Two-lane corridor the pedestrian runs keep the vehicle inside.
const CORRIDOR: Corridor = Corridor::X { left: -3.5, right: 3.5 };

/// Vehicle heading north in a corridor toward a walking pedestrian,
/// pushing for speed and straight steering while the pedestrian and road
/// edge barriers filter it. The initial state satisfies both levels of the
/// pedestrian barrier.
pub fn pedestrian_run(seed: u64) -> Invariance {
    pedestrian_run_with(seed, true, DT)
}

/// As [`pedestrian_run`]; with `walking` false the pedestrian stands still,
/// which is the case the frozen-ellipse barrier models exactly. `dt` is the
/// control and integration step.
pub fn pedestrian_run_with(seed: u64, walking: bool, dt: f64) -> Invariance {
    let mut r = rng(seed);
    let params = EllipseParams { epsilon: 2.0, k1: 1.5, k2: 18.0, k3: 7.0, lambda: 2.0 };
    let (mut car, mut ped) = loop {
        let car = BicycleState {
            x: r.random_range(-1.5..1.5),
            y: 0.0,
            theta: std::f64::consts::FRAC_PI_2 + r.random_range(-0.05..0.05),
            v: r.random_range(4.0..12.0),
        };
        // Half the pedestrians walk roughly toward the vehicle.
        let xi = if r.random_bool(0.5) {
            -std::f64::consts::FRAC_PI_2 + r.random_range(-0.5..0.5)
        } else {
            r.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        };
        let ped = PedestrianState {
            x: r.random_range(-3.0..3.0),
            y: r.random_range(8.0..40.0),
            speed: if walking { r.random_range(0.0..2.0) } else { 0.0 },
            xi,
        };
        let t = pedestrian_terms(&car, &unsafe_set_for(&car, &ped, SIGMA, &params), SIGMA, R_B);
        if t.b >= 0.0 && t.lf + t.b >= 0.0 {
            break (car, ped);
        }
    };
    let b_now = |car: &BicycleState, ped: &PedestrianState| {
        b5_value(car, &unsafe_set_for(car, ped, SIGMA, &params), SIGMA, R_B)
    };
    let initial = b_now(&car, &ped);
    let mut out = Invariance { initial, min: initial, infeasible_steps: 0 };
    let steps = (15.0 / dt).round() as usize;
    for _ in 0..steps {
        if car.y > ped.y + 15.0 {
            break;
        }
        let ell = unsafe_set_for(&car, &ped, SIGMA, &params);
        let mut targets = [0.0; DIM];
        targets[U2] = U_MAX;
        let mut bounds = vec![(-1.0, 1.0); DIM];
        bounds[U2] = (U_MIN, U_MAX);
        bounds[U1] = (-10.0, 10.0);
        let mut qp = QuadraticProgram::tracking(&[1.0; DIM], &targets)
            .with_bounds(bounds)
            .with_constraint(pedestrian_hocbf(&car, &ell, SIGMA, R_B));
        for c in steering_limit(car.v, DELTA_MAX0, V_MAX) {
            qp = qp.with_constraint(c);
        }
        for c in road_boundary_conditions(&car, CORRIDOR, SIGMA) {
            qp = qp.with_constraint(c);
        }
        let mut accel = vec![0.0; DIM];
        accel[U2] = 1.0;
        qp = qp
            .with_constraint(LinearConstraint::new(accel.clone(), Sense::Ge, V_MIN - car.v, Tag::SpeedMin))
            .with_constraint(LinearConstraint::new(accel, Sense::Le, V_MAX - car.v, Tag::SpeedMax));
        let input = match solve(&qp) {
            Ok(sol) if sol.is_optimal() => ControlInput { u1: sol.x[U1], u2: sol.x[U2] },
            _ => {
                out.infeasible_steps += 1;
                ControlInput { u1: 0.0, u2: U_MIN.max((V_MIN - car.v) / dt) }
            }
        };
        car = step_bicycle(car, input, SIGMA, dt);
        let (s, c) = ped.xi.sin_cos();
        ped.x += ped.speed * c * dt;
        ped.y += ped.speed * s * dt;
        out.min = out.min.min(b_now(&car, &ped));
    }
    out
}

// ---- resequencing oracle ---------------------------------------------------------

/// Random chains, listed lane by lane from front to back.
pub fn chain_instance(r: &mut impl Rng, sizes: &[usize]) -> Vec<ChainEntry> {
    let mut out = Vec::new();
    let mut id = 1;
    for (lane, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            out.push(ChainEntry {
                vehicle: id,
                path_id: lane as u32 + 1,
                omega: r.random_range(0.05..2.0),
                processing: r.random_range(0.5..10.0),
            });
            id += 1;
        }
    }
    out
}

/// Every interleaving of the chains that keeps each chain's order.
pub fn chain_orders(entries: &[ChainEntry]) -> Vec<Vec<ChainEntry>> {
    let mut chains: BTreeMap<u32, Vec<ChainEntry>> = BTreeMap::new();
    for e in entries {
        chains.entry(e.path_id).or_default().push(*e);
    }
    let chains: Vec<Vec<ChainEntry>> = chains.into_values().collect();
    let mut out = Vec::new();
    let mut heads = vec![0; chains.len()];
    let mut cur = Vec::new();
    fn rec(chains: &[Vec<ChainEntry>], heads: &mut [usize], cur: &mut Vec<ChainEntry>, out: &mut Vec<Vec<ChainEntry>>) {
        let mut any = false;
        for c in 0..chains.len() {
            if heads[c] < chains[c].len() {
                any = true;
                cur.push(chains[c][heads[c]]);
                heads[c] += 1;
                rec(chains, heads, cur, out);
                heads[c] -= 1;
                cur.pop();
            }
        }
        if !any {
            out.push(cur.clone());
        }
    }
    rec(&chains, &mut heads, &mut cur, &mut out);
    out
}

/// `sum omega_i C_i` where `C_i` is the running processing total.
pub fn weighted_completion(order: &[ChainEntry]) -> f64 {
    let mut clock = 0.0;
    order
        .iter()
        .map(|e| {
            clock += e.processing;
            e.omega * clock
        })
        .sum()
}

/// Best weight-to-time ratio over all initial segments of all legal orders.
pub fn best_initial_ratio(orders: &[Vec<ChainEntry>]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for o in orders {
        let (mut w, mut p) = (0.0, 0.0);
        for e in o {
            w += e.omega;
            p += e.processing;
            best = best.max(w / p);
        }
    }
    best
}

/// Best ratio reached by any initial segment of the given order.
pub fn own_initial_ratio(order: &[ChainEntry]) -> f64 {
    best_initial_ratio(std::slice::from_ref(&order.to_vec()))
}

/// Looks entries up by vehicle to rebuild an emitted order.
pub fn entries_in_order(entries: &[ChainEntry], ids: &[u32]) -> Vec<ChainEntry> {
    ids.iter().map(|id| *entries.iter().find(|e| e.vehicle == *id).expect("known vehicle")).collect()
}

/// Whether `ids` is a permutation of the entries that keeps each lane's
/// front-to-back order.
pub fn preserves_chains(entries: &[ChainEntry], ids: &[u32]) -> bool {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut expected: Vec<u32> = entries.iter().map(|e| e.vehicle).collect();
    expected.sort_unstable();
    if sorted != expected {
        return false;
    }
    let pos: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut last: BTreeMap<u32, usize> = BTreeMap::new();
    for e in entries {
        let at = pos[&e.vehicle];
        if let Some(prev) = last.insert(e.path_id, at) {
            if at < prev {
                return false;
            }
        }
    }
    true
}

/// Every lane split of up to six vehicles over up to three lanes.
pub fn chain_shapes() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 1..=6 {
        out.push(vec![a]);
        for b in 1..=6 - a {
            out.push(vec![a, b]);
            for c in 1..=6 - a - b {
                out.push(vec![a, b, c]);
            }
        }
    }
    out
}

// ---- scenario helpers --------------------------------------------------------------

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

pub fn load_named(name: &str) -> intersect::scenario::ScenarioConfig {
    let text = std::fs::read_to_string(scenario_path(name)).expect("scenario file exists");
    intersect::scenario::load_scenario(&text).expect("scenario validates")
}

/// The corpus scenario with the pedestrian stepping into the right lane at
/// a random time, depth, position and pace.
pub fn random_incursion(
    base: &intersect::scenario::ScenarioConfig,
    r: &mut impl Rng,
) -> intersect::scenario::ScenarioConfig {
    use intersect::scenario::Waypoint;
    let mut config = base.clone();
    let start = r.random_range(2.0..6.0);
    let y = r.random_range(-25.0..-12.0);
    let curb = 10.5;
    let depth = r.random_range(0.5..3.0);
    let pace = r.random_range(0.8..2.0);
    let linger = r.random_range(0.0..1.5);
    let t_in = start + 2.125 / pace;
    let t_deep = t_in + depth / pace;
    let t_back = t_deep + linger + depth / pace;
    config.pedestrian.waypoints = vec![
        Waypoint { t: start, x: curb + 2.125, y },
        Waypoint { t: t_in, x: curb, y },
        Waypoint { t: t_deep, x: curb - depth, y },
        Waypoint { t: t_deep + linger, x: curb - depth, y },
        Waypoint { t: t_back, x: curb, y },
        Waypoint { t: t_back + 2.0, x: curb + 2.0 * pace, y },
    ];
    config.params.seed = r.random();
    config
}

/// Per-vehicle minimum of the pedestrian barrier over a trace, for vehicles
/// whose first barrier sample lies in both the safe set and its first-order
/// set (b >= 0 and Lf b + b >= 0). Returns the minima and how many vehicles
/// started outside that set.
pub fn pedestrian_minima(
    trace: &[intersect::sim::TraceRecord],
    config: &intersect::scenario::ScenarioConfig,
) -> (BTreeMap<u32, f64>, usize) {
    let p = &config.params;
    let mut admitted: BTreeMap<u32, bool> = BTreeMap::new();
    let mut minima = BTreeMap::new();
    for rec in trace {
        let Some(b5) = rec.b5 else { continue };
        let ok = *admitted.entry(rec.vehicle).or_insert_with(|| {
            let Some(ped) = config.pedestrian.sample(rec.t) else {
                return false;
            };
            let s = BicycleState { x: rec.x, y: rec.y, theta: rec.theta, v: rec.v };
            let ell = unsafe_set_for(&s, &ped, p.sigma, &config.ellipse_for(rec.vehicle));
            let t = pedestrian_terms(&s, &ell, p.sigma, p.r_b);
            t.b >= 0.0 && t.lf + t.b >= 0.0
        });
        if ok {
            let m = minima.entry(rec.vehicle).or_insert(f64::INFINITY);
            *m = f64::min(*m, b5);
        }
    }
    let skipped = admitted.values().filter(|ok| !**ok).count();
    (minima, skipped)
}
