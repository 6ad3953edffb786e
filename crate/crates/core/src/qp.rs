//! Exact two-variable safety filter QP.
//!
//! minimize `0.5 |z - u_nom|^2` subject to half-planes `a_m + b_m . z >= 0`
//! and the box `|z|_inf <= u_max`.
//!
//! The optimum of a strictly convex QP in the plane is either the nominal
//! point, the projection onto one constraint line, or the intersection of two
//! constraint lines, so the solver enumerates those candidates (box edges
//! included) and keeps the best feasible one that passes the KKT sign test.
//! When the safety half-planes cannot all be met inside the box, the
//! [`solve_relaxed`] fallback minimizes the worst violation instead.

use crate::cbf::HalfPlane;
use crate::geometry::Vec2;

/// Relative tolerance when accepting a candidate as feasible.
const FEAS_REL: f64 = 1e-12;
/// Multiplier sign tolerance during KKT screening.
const DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub nominal: Vec2,
    pub constraints: Vec<HalfPlane>,
    pub u_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Relaxed,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Relaxed => "relaxed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec2,
    pub status: QpStatus,
    /// Indices into [`QpProblem::planes`]: safety constraints first, then the
    /// four box sides.
    pub active: Vec<usize>,
    /// Largest safety-constraint violation accepted at `z` (zero when optimal).
    pub slack: f64,
}

impl QpProblem {
    pub fn new(nominal: Vec2, constraints: Vec<HalfPlane>, u_max: f64) -> Self {
        QpProblem {
            nominal,
            constraints,
            u_max,
        }
    }

    /// Safety constraints followed by the box sides `+x, -x, +y, -y`.
    pub fn planes(&self) -> Vec<HalfPlane> {
        let u = self.u_max;
        let mut planes = self.constraints.clone();
        planes.extend([
            HalfPlane::new(u, Vec2::new(-1.0, 0.0)),
            HalfPlane::new(u, Vec2::new(1.0, 0.0)),
            HalfPlane::new(u, Vec2::new(0.0, -1.0)),
            HalfPlane::new(u, Vec2::new(0.0, 1.0)),
        ]);
        planes
    }

    pub fn objective(&self, z: Vec2) -> f64 {
        0.5 * (z - self.nominal).norm_sq()
    }

    /// Largest safety-constraint violation at `z`, zero when all hold.
    pub fn violation(&self, z: Vec2) -> f64 {
        self.constraints
            .iter()
            .map(|c| -c.margin(z))
            .fold(0.0, f64::max)
    }

    pub fn in_box(&self, z: Vec2) -> bool {
        z.norm_inf() <= self.u_max
    }
}

fn scale(plane: &HalfPlane, z: Vec2) -> f64 {
    1.0 + plane.offset.abs() + plane.normal.norm() * (1.0 + z.norm())
}

fn feasible(planes: &[HalfPlane], z: Vec2) -> bool {
    planes.iter().all(|p| p.margin(z) >= -FEAS_REL * scale(p, z))
}

/// Clamps tiny box overshoot left by floating-point intersection.
fn clamp_box(z: Vec2, u_max: f64) -> Vec2 {
    Vec2::new(z.x.clamp(-u_max, u_max), z.y.clamp(-u_max, u_max))
}

/// Intersection of the lines `a_k + b_k . z = 0`, with the multipliers that
/// express `z - nominal` in the two normals.
fn vertex(p: &HalfPlane, q: &HalfPlane, nominal: Vec2) -> Option<(Vec2, [f64; 2])> {
    let det = p.normal.cross(q.normal);
    let size = p.normal.norm() * q.normal.norm();
    if size == 0.0 || det.abs() <= 1e-14 * size {
        return None;
    }
    // b_p . z = -a_p, b_q . z = -a_q.
    let z = Vec2::new(
        (-p.offset * q.normal.y + q.offset * p.normal.y) / det,
        (-q.offset * p.normal.x + p.offset * q.normal.x) / det,
    );
    // z - nominal = l_p b_p + l_q b_q.
    let w = z - nominal;
    let lp = w.cross(q.normal) / det;
    let lq = p.normal.cross(w) / det;
    Some((z, [lp, lq]))
}

struct Best {
    z: Vec2,
    obj: f64,
    active: Vec<usize>,
}

fn better(z: Vec2, obj: f64, best: &Option<Best>) -> bool {
    match best {
        None => true,
        Some(b) => obj < b.obj || (obj == b.obj && (z.x, z.y) < (b.z.x, b.z.y)),
    }
}

/// Hard solve over an explicit plane list; `None` when no candidate is feasible.
fn solve_planes(nominal: Vec2, planes: &[HalfPlane], u_max: f64) -> Option<(Vec2, Vec<usize>)> {
    if planes.iter().all(|p| p.margin(nominal) >= 0.0) {
        return Some((nominal, Vec::new()));
    }
    let objective = |z: Vec2| 0.5 * (z - nominal).norm_sq();
    let mut screened: Option<Best> = None;
    let mut fallback: Option<Best> = None;
    let mut offer = |z: Vec2, active: Vec<usize>, kkt_ok: bool| {
        let clamped = clamp_box(z, u_max);
        // Points far outside the box belong to a different active set.
        if (clamped - z).norm_inf() > 1e-9 * (1.0 + u_max) {
            return;
        }
        let z = clamped;
        if !feasible(planes, z) {
            return;
        }
        let obj = objective(z);
        let slot = if kkt_ok { &mut screened } else { &mut fallback };
        if better(z, obj, slot) {
            *slot = Some(Best { z, obj, active });
        }
    };
    for (k, p) in planes.iter().enumerate() {
        let nn = p.normal.norm_sq();
        if nn == 0.0 {
            continue;
        }
        let lambda = -p.margin(nominal) / nn;
        offer(nominal + p.normal * lambda, vec![k], lambda >= -DUAL_TOL);
    }
    for k in 0..planes.len() {
        for l in k + 1..planes.len() {
            if let Some((z, [lk, ll])) = vertex(&planes[k], &planes[l], nominal) {
                offer(z, vec![k, l], lk >= -DUAL_TOL && ll >= -DUAL_TOL);
            }
        }
    }
    screened.or(fallback).map(|b| (b.z, b.active))
}

fn solve_hard(problem: &QpProblem) -> Option<QpSolution> {
    solve_planes(problem.nominal, &problem.planes(), problem.u_max).map(|(z, active)| QpSolution {
        z,
        status: QpStatus::Optimal,
        active,
        slack: 0.0,
    })
}

/// Exact minimizer, or the relaxed fallback when the safety constraints are
/// jointly infeasible inside the box.
pub fn solve(problem: &QpProblem) -> QpSolution {
    solve_hard(problem).unwrap_or_else(|| relax(problem))
}

/// Minimizes the worst safety-constraint violation over the box, then the
/// distance to the nominal control among minimax points. The box stays hard.
/// A feasible problem yields exactly the [`solve`] output.
pub fn solve_relaxed(problem: &QpProblem) -> QpSolution {
    let (s_star, _) = minimax(problem);
    if s_star == 0.0 {
        if let Some(hard) = solve_hard(problem) {
            return hard;
        }
    }
    relax(problem)
}

/// Row of a 3-variable LP constraint `coef . (z_x, z_y, s) >= rhs`.
#[derive(Clone, Copy)]
struct Row {
    coef: [f64; 3],
    rhs: f64,
}

fn solve3(rows: [&Row; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for (i, r) in rows.iter().enumerate() {
        m[i] = [r.coef[0], r.coef[1], r.coef[2], r.rhs];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Smallest achievable worst-case violation over the box and a point attaining it.
fn minimax(problem: &QpProblem) -> (f64, Vec2) {
    let u = problem.u_max;
    let mut rows: Vec<Row> = problem
        .constraints
        .iter()
        .map(|c| Row {
            coef: [c.normal.x, c.normal.y, 1.0],
            rhs: -c.offset,
        })
        .collect();
    rows.push(Row { coef: [0.0, 0.0, 1.0], rhs: 0.0 });
    rows.extend([
        Row { coef: [-1.0, 0.0, 0.0], rhs: -u },
        Row { coef: [1.0, 0.0, 0.0], rhs: -u },
        Row { coef: [0.0, -1.0, 0.0], rhs: -u },
        Row { coef: [0.0, 1.0, 0.0], rhs: -u },
    ]);
    let mut best: Option<(f64, Vec2)> = None;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            for k in j + 1..rows.len() {
                let Some([x, y, _]) = solve3([&rows[i], &rows[j], &rows[k]]) else {
                    continue;
                };
                let z = Vec2::new(x, y);
                if !(z.is_finite() && z.norm_inf() <= u * (1.0 + 1e-12)) {
                    continue;
                }
                let z = clamp_box(z, u);
                let s = problem.violation(z);
                let take = match best {
                    None => true,
                    Some((bs, bz)) => s < bs || (s == bs && problem.objective(z) < problem.objective(bz)),
                };
                if take {
                    best = Some((s, z));
                }
            }
        }
    }
    // The four box corners are always vertices, so `best` is set.
    best.expect("box corners are LP vertices")
}

fn relax(problem: &QpProblem) -> QpSolution {
    let (s_star, z_lp) = minimax(problem);
    let m = problem.constraints.len();
    // Shift every safety constraint by the optimal violation, plus a rounding allowance.
    let mut planes = problem.planes();
    for p in planes.iter_mut().take(m) {
        p.offset += s_star + 1e-12 * (1.0 + s_star + p.offset.abs());
    }
    let (z, active) = solve_planes(problem.nominal, &planes, problem.u_max).unwrap_or((z_lp, Vec::new()));
    QpSolution {
        z,
        status: QpStatus::Relaxed,
        active,
        slack: problem.violation(z),
    }
}

/// Residuals of the first-order optimality conditions at a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `|z - u_nom - sum lambda_k b_k|` over the active set.
    pub stationarity: f64,
    /// Largest violation of any constraint, box included.
    pub primal: f64,
    /// Smallest active multiplier.
    pub min_multiplier: f64,
    /// Largest `|lambda_k * margin_k|` over the active set.
    pub complementarity: f64,
}

impl KktReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.stationarity <= tol && self.primal <= tol && self.min_multiplier >= -tol && self.complementarity <= tol
    }
}

/// Assembles the KKT certificate from the returned active set.
pub fn kkt_certificate(problem: &QpProblem, solution: &QpSolution) -> KktReport {
    let planes = problem.planes();
    let z = solution.z;
    let w = z - problem.nominal;
    let primal = planes.iter().map(|p| -p.margin(z)).fold(0.0, f64::max);
    let normals: Vec<Vec2> = solution.active.iter().map(|&k| planes[k].normal).collect();
    let lambdas: Vec<f64> = match normals.as_slice() {
        [] => vec![],
        [n] => vec![w.dot(*n) / n.norm_sq()],
        [n, m] => {
            let det = n.cross(*m);
            if det.abs() <= 1e-14 * n.norm() * m.norm() {
                vec![w.dot(*n) / n.norm_sq(), 0.0]
            } else {
                vec![w.cross(*m) / det, n.cross(w) / det]
            }
        }
        _ => unreachable!("at most two active constraints in the plane"),
    };
    let residual = normals
        .iter()
        .zip(&lambdas)
        .fold(w, |acc, (n, l)| acc - *n * *l);
    let min_multiplier = lambdas.iter().copied().fold(0.0, f64::min);
    let complementarity = solution
        .active
        .iter()
        .zip(&lambdas)
        .map(|(&k, l)| (l * planes[k].margin(z)).abs())
        .fold(0.0, f64::max);
    KktReport {
        stationarity: residual.norm() / (1.0 + w.norm()),
        primal,
        min_multiplier,
        complementarity,
    }
}

/// Brute-force lattice minimizer used to cross-check [`solve`].
///
/// The lattice has `grid` points per axis spanning the box, endpoints included.
/// Feasible lattice points are scanned row by row (each row's feasible set is
/// an index interval). When no lattice point is feasible, the lattice point of
/// smallest worst-case violation is returned, ties going to the one nearest
/// the nominal control.
pub fn oracle_solve(problem: &QpProblem, grid: usize) -> Vec2 {
    assert!(grid >= 2, "lattice needs at least two points per axis");
    let u = problem.u_max;
    let h = 2.0 * u / (grid - 1) as f64;
    let coord = |k: usize| if k == grid - 1 { u } else { -u + h * k as f64 };
    let ok = |z: Vec2| problem.constraints.iter().all(|c| c.margin(z) >= 0.0);
    let index_of = |x: f64| ((x + u) / h).clamp(0.0, (grid - 1) as f64);

    let mut best: Option<(f64, Vec2)> = None;
    for row in 0..grid {
        let y = coord(row);
        let (mut lo, mut hi) = (-u, u);
        let mut empty = false;
        for c in &problem.constraints {
            // offset + bx x + by y >= 0
            let rest = c.offset + c.normal.y * y;
            if c.normal.x > 0.0 {
                lo = lo.max(-rest / c.normal.x);
            } else if c.normal.x < 0.0 {
                hi = hi.min(-rest / c.normal.x);
            } else if rest < 0.0 {
                empty = true;
            }
        }
        if empty || lo > hi {
            continue;
        }
        let mut klo = index_of(lo).floor() as usize;
        let mut khi = index_of(hi).ceil() as usize;
        while klo <= khi && !ok(Vec2::new(coord(klo), y)) {
            klo += 1;
        }
        while khi >= klo && khi > 0 && !ok(Vec2::new(coord(khi), y)) {
            khi -= 1;
        }
        if klo > khi || !ok(Vec2::new(coord(khi), y)) {
            continue;
        }
        let target = index_of(problem.nominal.x).round() as usize;
        let k0 = target.clamp(klo, khi);
        for k in [k0.saturating_sub(1), k0, k0 + 1] {
            if k < klo || k > khi {
                continue;
            }
            let z = Vec2::new(coord(k), y);
            let obj = problem.objective(z);
            if best.map_or(true, |(b, bz)| obj < b || (obj == b && (z.x, z.y) < (bz.x, bz.y))) {
                best = Some((obj, z));
            }
        }
    }
    if let Some((_, z)) = best {
        return z;
    }

    // No feasible lattice point: minimize the worst violation row by row.
    let mut best: Option<(f64, f64, Vec2)> = None;
    for row in 0..grid {
        let y = coord(row);
        let g = |k: usize| problem.violation_raw(Vec2::new(coord(k), y));
        // Ternary search on the convex sequence g.
        let (mut a, mut b) = (0usize, grid - 1);
        while b - a > 2 {
            let m1 = a + (b - a) / 3;
            let m2 = b - (b - a) / 3;
            if g(m1) <= g(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let kstar = (a..=b).min_by(|&p, &q| g(p).total_cmp(&g(q))).unwrap();
        let gmin = g(kstar);
        // The minimizing indices form an interval around kstar.
        let (mut lo, mut hi) = (kstar, kstar);
        let (mut l, mut r) = (0usize, kstar);
        while l < r {
            let mid = (l + r) / 2;
            if g(mid) <= gmin {
                r = mid;
            } else {
                l = mid + 1;
            }
        }
        lo = lo.min(l);
        let (mut l, mut r) = (kstar, grid - 1);
        while l < r {
            let mid = (l + r + 1) / 2;
            if g(mid) <= gmin {
                l = mid;
            } else {
                r = mid - 1;
            }
        }
        hi = hi.max(l);
        let k = (index_of(problem.nominal.x).round() as usize).clamp(lo, hi);
        let z = Vec2::new(coord(k), y);
        let obj = problem.objective(z);
        if best.map_or(true, |(bg, bo, _)| gmin < bg || (gmin == bg && obj < bo)) {
            best = Some((gmin, obj, z));
        }
    }
    best.expect("grid has rows").2
}

impl QpProblem {
    /// Worst signed violation, negative when every constraint holds strictly.
    fn violation_raw(&self, z: Vec2) -> f64 {
        self.constraints
            .iter()
            .map(|c| -c.margin(z))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hp(a: f64, bx: f64, by: f64) -> HalfPlane {
        HalfPlane::new(a, Vec2::new(bx, by))
    }

    #[test]
    fn unconstrained_inside_box_returns_nominal() {
        let p = QpProblem::new(Vec2::new(1.25, -3.5), vec![], 4.0);
        let s = solve(&p);
        assert_eq!(s.z, p.nominal);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.active.is_empty());
    }

    #[test]
    fn box_clamps_nominal() {
        let p = QpProblem::new(Vec2::new(10.0, 0.0), vec![], 4.0);
        let s = solve(&p);
        assert_eq!(s.z, Vec2::new(4.0, 0.0));
        assert!(kkt_certificate(&p, &s).passes(1e-9));
    }

    #[test]
    fn half_plane_projection() {
        let p = QpProblem::new(Vec2::new(0.0, -2.0), vec![hp(0.0, 0.0, 1.0)], 5.0);
        let s = solve(&p);
        assert_eq!(s.z, Vec2::ZERO);
        assert_eq!(s.active, vec![0]);
        assert!(kkt_certificate(&p, &s).passes(1e-9));
        let oracle = oracle_solve(&p, 1001);
        assert!((oracle - Vec2::ZERO).norm() < 1e-12);
    }

    #[test]
    fn vertex_solution() {
        // z_x >= 1 and z_y >= 1 from the origin: optimum at (1, 1).
        let p = QpProblem::new(Vec2::ZERO, vec![hp(-1.0, 1.0, 0.0), hp(-1.0, 0.0, 1.0)], 5.0);
        let s = solve(&p);
        assert!((s.z - Vec2::new(1.0, 1.0)).norm() < 1e-15);
        assert_eq!(s.active, vec![0, 1]);
        assert!(kkt_certificate(&p, &s).passes(1e-9));
    }

    #[test]
    fn symmetric_minimax_relaxation() {
        let p = QpProblem::new(Vec2::ZERO, vec![hp(-3.0, 1.0, 0.0), hp(-3.0, -1.0, 0.0)], 5.0);
        let s = solve(&p);
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!(s.z.x.abs() < 1e-9);
        assert!((s.slack - 3.0).abs() < 1e-9);
        let o = oracle_solve(&p, 2000);
        assert!(o.x.abs() <= 10.0 / 1999.0);
        assert!((p.violation(o) - 3.0).abs() <= 10.0 / 1999.0);
    }

    #[test]
    fn box_clipped_minimax() {
        let p = QpProblem::new(Vec2::ZERO, vec![hp(-6.0, 1.0, 0.0)], 5.0);
        let s = solve_relaxed(&p);
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!((s.z.x - 5.0).abs() < 1e-9);
        assert!(s.z.y.abs() < 1e-12);
        assert!((s.slack - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feasible_problem_through_relaxed_path_matches_solve() {
        let p = QpProblem::new(Vec2::new(2.0, -1.0), vec![hp(1.0, -1.0, 0.5), hp(0.0, 0.3, 1.0)], 3.0);
        let hard = solve(&p);
        let soft = solve_relaxed(&p);
        assert_eq!(hard, soft);
        assert_eq!(soft.slack, 0.0);
    }

    #[test]
    fn zero_normal_constraints() {
        let always = QpProblem::new(Vec2::new(1.0, 1.0), vec![hp(2.0, 0.0, 0.0)], 5.0);
        assert_eq!(solve(&always).z, Vec2::new(1.0, 1.0));
        let never = QpProblem::new(Vec2::new(1.0, 1.0), vec![hp(-2.0, 0.0, 0.0)], 5.0);
        let s = solve(&never);
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!((s.slack - 2.0).abs() < 1e-9);
        assert_eq!(s.z, Vec2::new(1.0, 1.0));
    }

    #[test]
    fn duplicate_and_parallel_constraints() {
        let c = hp(-1.0, 1.0, 1.0);
        let p = QpProblem::new(Vec2::ZERO, vec![c, c, hp(-2.0, 2.0, 2.0)], 5.0);
        let s = solve(&p);
        assert!((s.z - Vec2::new(0.5, 0.5)).norm() < 1e-12);
        assert!(kkt_certificate(&p, &s).passes(1e-9));
    }

    #[test]
    fn oracle_examples() {
        let p = QpProblem::new(Vec2::new(0.013, -0.021), vec![], 1.0);
        let o = oracle_solve(&p, 101);
        assert!((o - Vec2::new(0.02, -0.02)).norm() < 1e-12);
        let infeasible = QpProblem::new(Vec2::ZERO, vec![hp(-10.0, 1.0, 0.0)], 1.0);
        assert_eq!(oracle_solve(&infeasible, 101), Vec2::new(1.0, 0.0));
    }

    fn arb_problem() -> impl Strategy<Value = QpProblem> {
        let plane = (-4.0..4.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, x, y)| hp(a, x, y));
        (-10.0..10.0f64, -10.0..10.0f64, prop::collection::vec(plane, 0..7))
            .prop_map(|(x, y, cs)| QpProblem::new(Vec2::new(x, y), cs, 5.0))
    }

    proptest! {
        #[test]
        fn optimal_solutions_are_certified(p in arb_problem()) {
            let s = solve(&p);
            prop_assert!(p.in_box(s.z));
            if s.status == QpStatus::Optimal {
                let kkt = kkt_certificate(&p, &s);
                prop_assert!(kkt.passes(1e-9), "{kkt:?}");
            } else {
                prop_assert!(s.slack > 0.0);
            }
        }

        #[test]
        fn feasible_nominal_is_untouched(p in arb_problem()) {
            let s = solve(&p);
            if p.planes().iter().all(|c| c.margin(p.nominal) >= 0.0) {
                prop_assert_eq!(s.z, p.nominal);
            }
        }

        #[test]
        fn deterministic(p in arb_problem()) {
            prop_assert_eq!(solve(&p), solve(&p.clone()));
        }

        #[test]
        fn adding_a_constraint_never_lowers_the_objective(p in arb_problem(), extra in (-4.0..4.0f64, -1.0..1.0f64, -1.0..1.0f64)) {
            let base = solve(&p);
            let mut q = p.clone();
            q.constraints.push(hp(extra.0, extra.1, extra.2));
            let more = solve(&q);
            if base.status == QpStatus::Optimal && more.status == QpStatus::Optimal {
                prop_assert!(q.objective(more.z) >= p.objective(base.z) - 1e-9);
            }
        }
    }
}
