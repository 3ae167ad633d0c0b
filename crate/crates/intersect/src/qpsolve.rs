//! Small dense convex QP with a diagonal Hessian.
//!
//! Minimizes `sum_i w_i x_i^2 + c . x + k` subject to linear inequalities and
//! per-variable bounds. A primal active-set method handles zero weights as
//! long as the affected variables are boxed: zero-curvature descent
//! directions are followed until a constraint blocks them. Feasibility is
//! found first with an auxiliary linear program solved by the same routine.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::barriers::LinearConstraint;

/// Constraint satisfaction tolerance on normalized rows.
const FEAS_TOL: f64 = 1e-10;
/// Curvature below this is treated as zero.
const CURV_TOL: f64 = 1e-12;
/// Largest allowed ratio between the biggest and smallest positive weight.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("malformed program: {0}")]
    Invalid(String),
    #[error("objective unbounded below along a zero-weight direction")]
    Unbounded,
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("no feasible grid point")]
    EmptyFeasibleGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    /// Diagonal quadratic weights, all nonnegative.
    pub weights: Vec<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub constraints: Vec<LinearConstraint>,
    /// `(lower, upper)` per variable; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl QuadraticProgram {
    /// `sum_i w_i (x_i - r_i)^2` with no constraints and free variables.
    pub fn tracking(weights: &[f64], targets: &[f64]) -> Self {
        let linear = weights.iter().zip(targets).map(|(w, r)| -2.0 * w * r).collect();
        let constant = weights.iter().zip(targets).map(|(w, r)| w * r * r).sum();
        QuadraticProgram {
            weights: weights.to_vec(),
            linear,
            constant,
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); weights.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_constraint(mut self, c: LinearConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(&self.linear).zip(x).map(|((w, c), xi)| w * xi * xi + c * xi).sum::<f64>()
            + self.constant
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.linear).zip(x).map(|((w, c), xi)| 2.0 * w * xi + c).collect()
    }

    /// Smallest slack over constraints and bounds; nonnegative when feasible.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.slack(x));
        let boxes = self.bounds.iter().zip(x).flat_map(|(&(lo, hi), xi)| [xi - lo, hi - xi]);
        rows.chain(boxes).fold(f64::INFINITY, f64::min)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        if n == 0 {
            return Err(QpError::Invalid("empty decision vector".into()));
        }
        if self.linear.len() != n || self.bounds.len() != n {
            return Err(QpError::Invalid("dimension mismatch".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(QpError::Invalid("weights must be finite and nonnegative".into()));
        }
        if self.linear.iter().any(|c| !c.is_finite()) || !self.constant.is_finite() {
            return Err(QpError::Invalid("non-finite linear term".into()));
        }
        for c in &self.constraints {
            if c.coeffs.len() != n || !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(QpError::Invalid(format!("bad {} row", c.tag)));
            }
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(QpError::Invalid(format!("bad bounds on variable {i}")));
            }
            if self.weights[i] == 0.0 && !(lo.is_finite() && hi.is_finite()) {
                return Err(QpError::Invalid(format!("variable {i} has zero weight and is not boxed")));
            }
        }
        let positive: Vec<f64> = self.weights.iter().copied().filter(|w| *w > 0.0).collect();
        if let (Some(max), Some(min)) =
            (positive.iter().copied().reduce(f64::max), positive.iter().copied().reduce(f64::min))
        {
            if max / min > MAX_CONDITION {
                return Err(QpError::NumericalBreakdown(format!("weight ratio {:.3e}", max / min)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    /// Multipliers of `constraints`, in their own scaling, nonnegative.
    pub multipliers: Vec<f64>,
    /// `(lower, upper)` bound multipliers, nonnegative.
    pub bound_multipliers: Vec<(f64, f64)>,
    /// Indices of constraints active at the solution.
    pub active: Vec<usize>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Normalized `a . x >= b` rows with a pointer back to their origin.
struct Rows {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    scale: Vec<f64>,
    origin: Vec<Origin>,
}

#[derive(Clone, Copy)]
enum Origin {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

impl Rows {
    fn build(qp: &QuadraticProgram) -> Rows {
        let n = qp.dim();
        let mut rows = Rows { a: vec![], b: vec![], scale: vec![], origin: vec![] };
        for (k, c) in qp.constraints.iter().enumerate() {
            let (a, b) = c.as_ge();
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                // Constant row: handled by the feasibility check below.
                rows.push(vec![0.0; n], b, 1.0, Origin::Row(k));
            } else {
                rows.push(a.iter().map(|v| v / norm).collect(), b / norm, norm, Origin::Row(k));
            }
        }
        for (i, &(lo, hi)) in qp.bounds.iter().enumerate() {
            if lo.is_finite() {
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                rows.push(a, lo, 1.0, Origin::Lower(i));
            }
            if hi.is_finite() {
                let mut a = vec![0.0; n];
                a[i] = -1.0;
                rows.push(a, -hi, 1.0, Origin::Upper(i));
            }
        }
        rows
    }

    fn push(&mut self, a: Vec<f64>, b: f64, scale: f64, origin: Origin) {
        self.a.push(a);
        self.b.push(b);
        self.scale.push(scale);
        self.origin.push(origin);
    }

    fn len(&self) -> usize {
        self.b.len()
    }

    fn residual(&self, j: usize, x: &[f64]) -> f64 {
        dot(&self.a[j], x) - self.b[j]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one active-set run.
struct ActiveSetResult {
    x: Vec<f64>,
    working: Vec<usize>,
    lambda: Vec<f64>,
}

/// Minimizes `0.5 x' diag(h) x + c' x` over `rows`, starting from a point
/// that satisfies them (up to round-off).
fn active_set(
    h: &[f64],
    c: &[f64],
    rows: &Rows,
    mut x: Vec<f64>,
    mut working: Vec<usize>,
) -> Result<ActiveSetResult, QpError> {
    let n = x.len();
    let max_iter = 50 * (rows.len() + n) + 100;
    for iter in 0..max_iter {
        let g: Vec<f64> = (0..n).map(|i| h[i] * x[i] + c[i]).collect();
        let z = null_space(rows, &working, n);
        let step = reduced_step(h, &g, &z);
        let (p, ray) = match step {
            Some(s) => s,
            None => {
                let lambda = multipliers(rows, &working, &g)?;
                // Drop the most negative multiplier; ties go to the lowest row
                // index. After many iterations fall back to the lowest index
                // with a negative multiplier to rule out cycling.
                let bland = iter > max_iter / 2;
                let mut drop: Option<usize> = None;
                for (k, &l) in lambda.iter().enumerate() {
                    if l < -1e-10 {
                        let better = match drop {
                            None => true,
                            Some(d) if bland => working[k] < working[d],
                            Some(d) => l < lambda[d] || (l == lambda[d] && working[k] < working[d]),
                        };
                        if better {
                            drop = Some(k);
                        }
                    }
                }
                match drop {
                    None => return Ok(ActiveSetResult { x, working, lambda }),
                    Some(k) => {
                        working.remove(k);
                        continue;
                    }
                }
            }
        };
        let mut alpha = if ray { f64::INFINITY } else { 1.0 };
        let mut blocking = None;
        for j in 0..rows.len() {
            if working.contains(&j) {
                continue;
            }
            let ap = dot(&rows.a[j], &p);
            if ap < -1e-14 {
                let ratio = rows.residual(j, &x).max(0.0) / -ap;
                if ratio < alpha || (ratio == alpha && blocking.is_some_and(|b| j < b)) {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        if !alpha.is_finite() {
            return Err(QpError::Unbounded);
        }
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        if let Some(j) = blocking {
            working.push(j);
        }
    }
    Err(QpError::NumericalBreakdown("active-set iteration limit".into()))
}

/// Orthonormal basis of `{p : a_j . p = 0, j in working}` as columns.
fn null_space(rows: &Rows, working: &[usize], n: usize) -> DMatrix<f64> {
    if working.is_empty() {
        return DMatrix::identity(n, n);
    }
    let a =
        DMatrix::from_fn(working.len().max(n), n, |r, c| if r < working.len() { rows.a[working[r]][c] } else { 0.0 });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    // Singular values are not sorted; pick the right singular vectors of
    // the (numerically) zero ones.
    let kernel: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] <= 1e-10).collect();
    DMatrix::from_fn(n, kernel.len(), |r, c| v_t[(kernel[c], r)])
}

/// Newton step within the null space, or a zero-curvature descent ray.
/// `None` means the point is stationary on the current working set.
fn reduced_step(h: &[f64], g: &[f64], z: &DMatrix<f64>) -> Option<(Vec<f64>, bool)> {
    let n = g.len();
    let r = z.ncols();
    if r == 0 {
        return None;
    }
    let gv = DVector::from_column_slice(g);
    let gz = z.transpose() * &gv;
    let hz = DMatrix::from_fn(r, r, |i, j| (0..n).map(|k| z[(k, i)] * h[k] * z[(k, j)]).sum());
    let eig = hz.symmetric_eigen();
    let hmax = h.iter().copied().fold(0.0, f64::max).max(1.0);
    let gscale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut ray = DVector::zeros(r);
    let mut newton = DVector::zeros(r);
    let mut has_ray = false;
    for k in 0..r {
        let q = eig.eigenvectors.column(k);
        let proj = q.dot(&gz);
        let lam = eig.eigenvalues[k];
        if lam > CURV_TOL * hmax {
            newton -= q * (proj / lam);
        } else if proj.abs() > 1e-12 * gscale {
            ray -= q * proj;
            has_ray = true;
        }
    }
    let step = if has_ray { z * ray } else { z * newton };
    let norm = step.norm();
    if norm <= 1e-13 * (1.0 + gscale / hmax) {
        return None;
    }
    Some((step.iter().copied().collect(), has_ray))
}

/// Least-squares multipliers with `sum_j lambda_j a_j = g`.
fn multipliers(rows: &Rows, working: &[usize], g: &[f64]) -> Result<Vec<f64>, QpError> {
    if working.is_empty() {
        return Ok(vec![]);
    }
    let n = g.len();
    let at = DMatrix::from_fn(n, working.len(), |r, c| rows.a[working[c]][r]);
    let svd = at.svd(true, true);
    svd.solve(&DVector::from_column_slice(g), 1e-12)
        .map(|l| l.iter().copied().collect())
        .map_err(|e| QpError::NumericalBreakdown(e.to_string()))
}

/// Finds a point satisfying all rows, or reports the smallest achievable
/// uniform violation.
fn phase_one(rows: &Rows, start: &[f64]) -> Result<(Vec<f64>, f64), QpError> {
    let n = start.len();
    let worst = (0..rows.len()).map(|j| -rows.residual(j, start)).fold(0.0, f64::max);
    if worst <= FEAS_TOL {
        return Ok((start.to_vec(), 0.0));
    }
    // Variables (x, t): every row gains +t, box rows included, and t >= 0.
    let mut aux = Rows { a: vec![], b: vec![], scale: vec![], origin: vec![] };
    for j in 0..rows.len() {
        let mut a = rows.a[j].clone();
        a.push(1.0);
        aux.push(a, rows.b[j], 1.0, rows.origin[j]);
    }
    let mut t_row = vec![0.0; n + 1];
    t_row[n] = 1.0;
    aux.push(t_row, 0.0, 1.0, Origin::Row(usize::MAX));
    let mut x0 = start.to_vec();
    x0.push(worst);
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let h = vec![0.0; n + 1];
    let res = active_set(&h, &c, &aux, x0, vec![])?;
    let t = res.x[n];
    Ok((res.x[..n].to_vec(), t))
}

pub fn solve(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    let start: Vec<f64> = qp.bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi.max(lo))).collect();
    solve_from(qp, &start)
}

/// Same as [`solve`] with a caller-chosen starting guess.
pub fn solve_from(qp: &QuadraticProgram, guess: &[f64]) -> Result<QpSolution, QpError> {
    qp.check()?;
    let n = qp.dim();
    if guess.len() != n {
        return Err(QpError::Invalid("guess has wrong length".into()));
    }
    let rows = Rows::build(qp);
    let infeasible = || QpSolution {
        x: guess.to_vec(),
        objective: f64::NAN,
        status: QpStatus::Infeasible,
        multipliers: vec![0.0; qp.constraints.len()],
        bound_multipliers: vec![(0.0, 0.0); n],
        active: vec![],
    };
    // A zero row is either vacuous or contradictory.
    for j in 0..rows.len() {
        if rows.a[j].iter().all(|v| *v == 0.0) && rows.b[j] > FEAS_TOL {
            return Ok(infeasible());
        }
    }
    if qp.bounds.iter().any(|&(lo, hi)| lo > hi) {
        return Ok(infeasible());
    }
    let start: Vec<f64> = guess.iter().zip(&qp.bounds).map(|(g, &(lo, hi))| g.clamp(lo, hi)).collect();
    let (x0, violation) = phase_one(&rows, &start)?;
    if violation > 1e-9 {
        return Ok(infeasible());
    }
    let h: Vec<f64> = qp.weights.iter().map(|w| 2.0 * w).collect();
    let res = active_set(&h, &qp.linear, &rows, x0, vec![])?;
    let mut multipliers = vec![0.0; qp.constraints.len()];
    let mut bound_multipliers = vec![(0.0, 0.0); n];
    let mut active = vec![];
    for (k, &j) in res.working.iter().enumerate() {
        let l = res.lambda.get(k).copied().unwrap_or(0.0).max(0.0);
        match rows.origin[j] {
            Origin::Row(r) => {
                multipliers[r] += l / rows.scale[j];
                active.push(r);
            }
            Origin::Lower(i) => bound_multipliers[i].0 += l,
            Origin::Upper(i) => bound_multipliers[i].1 += l,
        }
    }
    active.sort_unstable();
    let objective = qp.objective(&res.x);
    Ok(QpSolution { x: res.x, objective, status: QpStatus::Optimal, multipliers, bound_multipliers, active })
}

/// Stationarity and complementarity residuals of an optimal solution.
pub fn kkt_residuals(qp: &QuadraticProgram, sol: &QpSolution) -> (f64, f64) {
    let mut r = qp.gradient(&sol.x);
    let mut comp: f64 = 0.0;
    for (c, &l) in qp.constraints.iter().zip(&sol.multipliers) {
        let (a, _) = c.as_ge();
        for (ri, ai) in r.iter_mut().zip(&a) {
            *ri -= l * ai;
        }
        comp = comp.max((l * c.slack(&sol.x)).abs());
    }
    for (i, &(ml, mu)) in sol.bound_multipliers.iter().enumerate() {
        r[i] -= ml - mu;
        let (lo, hi) = qp.bounds[i];
        if ml > 0.0 {
            comp = comp.max((ml * (sol.x[i] - lo)).abs());
        }
        if mu > 0.0 {
            comp = comp.max((mu * (hi - sol.x[i])).abs());
        }
    }
    (r.iter().map(|v| v.abs()).fold(0.0, f64::max), comp)
}

/// Exhaustive grid search over the box with successive zooming. Returns the
/// best grid point that satisfies every row over all levels. Testing aid
/// only.
///
/// Each level scans `cells + 1` points per axis, then the next level rescans
/// `max(cells / 4, 2)` cells on each side of a centre. Two zooms run: one
/// centred on the best feasible point, one on the best point under a filter
/// relaxed by half a cell of row slack. The relaxed zoom keeps thin feasible
/// wedges and rows nearly parallel to an axis from stranding the search.
pub fn brute_force_oracle(qp: &QuadraticProgram, cells: usize, refinements: usize) -> Result<(Vec<f64>, f64), QpError> {
    let n = qp.dim();
    if n == 0 || n > 4 {
        return Err(QpError::Invalid("oracle supports 1 to 4 variables".into()));
    }
    if cells == 0 || qp.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(QpError::Invalid("oracle needs a finite box".into()));
    }
    let strict = zoom(qp, cells, refinements, false);
    let relaxed = zoom(qp, cells, refinements, true);
    match (strict, relaxed) {
        (Some(a), Some(b)) => Ok(if b.1 < a.1 { b } else { a }),
        (a, b) => a.or(b).ok_or(QpError::EmptyFeasibleGrid),
    }
}

fn zoom(qp: &QuadraticProgram, cells: usize, refinements: usize, follow_relaxed: bool) -> Option<(Vec<f64>, f64)> {
    let n = qp.dim();
    let mut lo: Vec<f64> = qp.bounds.iter().map(|b| b.0).collect();
    let mut hi: Vec<f64> = qp.bounds.iter().map(|b| b.1).collect();
    let keep = (cells / 4).max(2) as f64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _level in 0..=refinements {
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / cells as f64).collect();
        let tol: Vec<f64> = qp
            .constraints
            .iter()
            .map(|c| 0.5 * c.coeffs.iter().zip(&step).map(|(a, h)| a.abs() * h).sum::<f64>())
            .collect();
        let total = (cells + 1).pow(n as u32);
        let mut x = vec![0.0; n];
        let mut level_best: Option<(Vec<f64>, f64)> = None;
        let mut guide: Option<(Vec<f64>, f64)> = None;
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..n {
                let k = rem % (cells + 1);
                rem /= cells + 1;
                x[i] = if k == cells { hi[i] } else { lo[i] + k as f64 * step[i] };
            }
            let mut feasible = true;
            let mut relaxed = true;
            for (c, t) in qp.constraints.iter().zip(&tol) {
                let s = c.slack(&x);
                feasible &= s >= -1e-12;
                relaxed &= s >= -t - 1e-12;
            }
            if !relaxed {
                continue;
            }
            let f = qp.objective(&x);
            if guide.as_ref().is_none_or(|(_, fb)| f < *fb) {
                guide = Some((x.clone(), f));
            }
            if feasible && level_best.as_ref().is_none_or(|(_, fb)| f < *fb) {
                level_best = Some((x.clone(), f));
            }
        }
        if let Some((p, f)) = &level_best {
            if best.as_ref().is_none_or(|(_, fb)| f < fb) {
                best = Some((p.clone(), *f));
            }
        }
        let centre = if follow_relaxed { guide.as_ref() } else { best.as_ref() };
        let Some((c, _)) = centre else {
            break;
        };
        for i in 0..n {
            let (blo, bhi) = qp.bounds[i];
            lo[i] = (c[i] - keep * step[i]).max(blo);
            hi[i] = (c[i] + keep * step[i]).min(bhi);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::{Sense, Tag};
    use approx::assert_abs_diff_eq;

    fn row(coeffs: &[f64], sense: Sense, rhs: f64) -> LinearConstraint {
        LinearConstraint::new(coeffs.to_vec(), sense, rhs, Tag::SpeedMax)
    }

    #[test]
    fn clipped_optimum() {
        let qp = QuadraticProgram::tracking(&[1.0], &[2.0]).with_constraint(row(&[1.0], Sense::Le, 1.0));
        let s = solve(&qp).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.multipliers[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn inactive_constraint() {
        let qp = QuadraticProgram::tracking(&[1.0], &[2.0]).with_constraint(row(&[1.0], Sense::Le, 3.0));
        let s = solve(&qp).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn contradictory_pair_is_infeasible() {
        let qp = QuadraticProgram::tracking(&[1.0], &[0.0])
            .with_constraint(row(&[1.0], Sense::Le, 0.0))
            .with_constraint(row(&[1.0], Sense::Ge, 1.0))
            .with_bounds(vec![(-5.0, 5.0)]);
        assert_eq!(solve(&qp).unwrap().status, QpStatus::Infeasible);
        assert_eq!(brute_force_oracle(&qp, 100, 0), Err(QpError::EmptyFeasibleGrid));
    }

    #[test]
    fn zero_weight_needs_a_box() {
        let qp = QuadraticProgram::tracking(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(solve(&qp), Err(QpError::Invalid(_))));
        let boxed = qp.with_bounds(vec![(-1.0, 1.0), (f64::NEG_INFINITY, f64::INFINITY)]);
        assert!(solve(&boxed).unwrap().is_optimal());
    }

    #[test]
    fn zero_weight_linear_term_drives_to_box() {
        // Pure linear objective in x0 pushes it to its upper bound.
        let mut qp = QuadraticProgram::tracking(&[0.0, 1.0], &[0.0, 0.0])
            .with_bounds(vec![(-1.0, 2.0), (f64::NEG_INFINITY, f64::INFINITY)])
            .with_constraint(row(&[1.0, 1.0], Sense::Le, 1.5));
        qp.linear[0] = -1.0;
        let s = solve(&qp).unwrap();
        let (stat, comp) = kkt_residuals(&qp, &s);
        assert!(stat < 1e-9 && comp < 1e-9, "{stat} {comp}");
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], -0.5, epsilon = 1e-9);
    }

    #[test]
    fn oracle_matches_simple_instance() {
        let qp = QuadraticProgram::tracking(&[1.0], &[2.0])
            .with_constraint(row(&[1.0], Sense::Le, 1.0))
            .with_bounds(vec![(-5.0, 5.0)]);
        let (x, f) = brute_force_oracle(&qp, 10_000, 0).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-3);
        assert!(f >= 1.0 - 1e-12);
    }

    #[test]
    fn two_dimensional_corner() {
        // min (x-3)^2 + (y-3)^2, x + y <= 2, x >= 0, y >= 0 -> (1, 1)
        let qp = QuadraticProgram::tracking(&[1.0, 1.0], &[3.0, 3.0])
            .with_constraint(row(&[1.0, 1.0], Sense::Le, 2.0))
            .with_bounds(vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)]);
        let s = solve(&qp).unwrap();
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-10);
        let (stat, comp) = kkt_residuals(&qp, &s);
        assert!(stat < 1e-9 && comp < 1e-9);
    }
}
