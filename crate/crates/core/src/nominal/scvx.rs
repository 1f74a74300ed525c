//! Successive convexification for the minimum-effort nominal trajectory.
//!
//! Each iteration linearizes the RK4 zero-order-hold discretization about the
//! current iterate and solves a convex QP: effort `sum (a^2 + omega^2) dt`,
//! linearized dynamics with l1-penalized virtual controls, boundary states,
//! control bounds, per-node corridor half-planes and a box trust region.
//! Steps are accepted only when they decrease the nonlinear merit
//! `effort + penalty * sum |defect|_1`, so the merit history is monotone.

use std::f64::consts::PI;

use clarabel::algebra::CscMatrix;
use nalgebra::Matrix6;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT,
};
use serde::{Deserialize, Serialize};

use super::{analytic_nominal, rk4, ArcLine, Corridor, NominalTrajectory, UnicycleState};
use crate::error::{Error, Result};

/// Lane width of the standard intersection, meters.
pub const LANE_WIDTH: f64 = 3.5;
/// Radius at which the standard instance starts and ends, meters.
pub const BOUNDARY_RADIUS: f64 = 25.0;
/// Half-size of the turning pocket; matches the intersection circle.
pub const POCKET: f64 = 10.0;
/// Radius of the arc-line initial guess, meters.
pub const GUESS_RADIUS: f64 = 7.0;
pub const DEFAULT_NODES: usize = 50;

const FD_STEP: f64 = 1e-6;
const HESS_STEP: f64 = 1e-4;
const MEMBERSHIP_TOL: f64 = 1e-6;
const MAX_SOLVE_FAILURES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NominalProblem {
    pub start: UnicycleState,
    pub goal: UnicycleState,
    pub corridor: Corridor,
    pub nodes: usize,
    pub duration: f64,
    pub accel_max: f64,
    pub omega_max: f64,
    /// Initial iterate; defaults to linear interpolation between start and goal.
    pub guess: Option<NominalTrajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScvxOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest node position change, meters.
    pub tolerance: f64,
    pub trust_radius: f64,
    pub trust_radius_max: f64,
    pub virtual_penalty: f64,
}

impl Default for ScvxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-3,
            trust_radius: 2.0,
            trust_radius_max: 50.0,
            virtual_penalty: 1e1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalSolution {
    pub trajectory: NominalTrajectory,
    pub converged: bool,
    pub iterations: usize,
    /// Merit of the initial iterate followed by every accepted iterate.
    pub objective_history: Vec<f64>,
}

fn lane_start() -> [f64; 2] {
    let half = LANE_WIDTH / 2.0;
    [half, -(BOUNDARY_RADIUS * BOUNDARY_RADIUS - half * half).sqrt()]
}

/// Left turn from the northbound approach lane to the westbound exit lane,
/// starting and ending on the 25 m circle at `speed`. The horizon is the
/// arc-line guess length at `speed`.
pub fn standard_left_turn(speed: f64) -> Result<NominalProblem> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::invalid(format!("speed must be positive, got {speed}")));
    }
    let [lat0, lon0] = lane_start();
    let start = UnicycleState::new(lat0, lon0, 0.0, speed);
    let goal = UnicycleState::new(lon0, lat0, -PI / 2.0, speed);
    let straight = -lon0 - (GUESS_RADIUS - lat0);
    let path = ArcLine {
        entry: start,
        exit_heading: -PI / 2.0,
        turn_radius: GUESS_RADIUS,
        approach_length: straight,
        exit_length: straight,
        speed,
        nodes: DEFAULT_NODES,
    };
    let guess = analytic_nominal(&path)?;
    Ok(NominalProblem {
        start,
        goal,
        corridor: Corridor::left_turn(LANE_WIDTH, POCKET),
        nodes: DEFAULT_NODES,
        duration: guess.duration(),
        accel_max: 3.0,
        omega_max: 1.5,
        guess: Some(guess),
    })
}

/// Straight drive along the approach lane centreline across the whole circle.
pub fn straight_problem(speed: f64) -> Result<NominalProblem> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::invalid(format!("speed must be positive, got {speed}")));
    }
    let [lat0, lon0] = lane_start();
    let start = UnicycleState::new(lat0, lon0, 0.0, speed);
    let goal = UnicycleState::new(lat0, -lon0, 0.0, speed);
    Ok(NominalProblem {
        start,
        goal,
        corridor: Corridor::straight(0.0, LANE_WIDTH),
        nodes: DEFAULT_NODES,
        duration: -2.0 * lon0 / speed,
        accel_max: 3.0,
        omega_max: 1.5,
        guess: None,
    })
}

impl NominalProblem {
    fn validate(&self) -> Result<()> {
        if self.nodes < 10 {
            return Err(Error::invalid(format!("need at least 10 nodes, got {}", self.nodes)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.accel_max > 0.0 && self.omega_max > 0.0) {
            return Err(Error::invalid("control bounds must be positive"));
        }
        for (name, s) in [("start", &self.start), ("goal", &self.goal)] {
            if !s.to_array().iter().all(|v| v.is_finite()) || s.speed < 0.0 {
                return Err(Error::invalid(format!("{name} state is not valid")));
            }
            if !self.corridor.contains(s.pos, MEMBERSHIP_TOL) {
                return Err(Error::InfeasibleProblem(format!(
                    "{name} position ({:.3}, {:.3}) lies outside the corridor",
                    s.pos[0], s.pos[1]
                )));
            }
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.duration / (self.nodes - 1) as f64
    }

    /// Initial iterate on this problem's node grid.
    fn initial(&self) -> (Vec<[f64; 4]>, Vec<[f64; 2]>) {
        let n = self.nodes;
        if let Some(g) = &self.guess {
            let states = (0..n)
                .map(|k| g.state_at(k as f64 / (n - 1) as f64 * g.duration()).to_array())
                .collect();
            let controls = (0..n - 1)
                .map(|k| g.control_at((k as f64 + 0.5) / (n - 1) as f64 * g.duration()))
                .collect();
            return (states, controls);
        }
        let a = self.start.to_array();
        let b = self.goal.to_array();
        let states = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
            })
            .collect();
        (states, vec![[0.0, 0.0]; n - 1])
    }
}

struct Iterate {
    x: Vec<[f64; 4]>,
    u: Vec<[f64; 2]>,
}

impl Iterate {
    fn effort(&self, dt: f64) -> f64 {
        self.u.iter().map(|u| (u[0] * u[0] + u[1] * u[1]) * dt).sum()
    }

    fn defects(&self, dt: f64) -> impl Iterator<Item = [f64; 4]> + '_ {
        self.x.windows(2).zip(&self.u).map(move |(w, u)| {
            let f = rk4(&w[0], *u, dt);
            std::array::from_fn(|i| f[i] - w[1][i])
        })
    }

    fn merit(&self, dt: f64, penalty: f64) -> f64 {
        let defect: f64 = self.defects(dt).map(|d| d.iter().map(|v| v.abs()).sum::<f64>()).sum();
        self.effort(dt) + penalty * defect
    }

    fn max_position_defect(&self, dt: f64) -> f64 {
        self.defects(dt).map(|d| d[0].hypot(d[1])).fold(0.0, f64::max)
    }
}

/// Discrete step on the stacked `[state, control]` vector.
fn step(w: &[f64; 6], dt: f64) -> [f64; 4] {
    rk4(&[w[0], w[1], w[2], w[3]], [w[4], w[5]], dt)
}

fn stack(x: &[f64; 4], u: [f64; 2]) -> [f64; 6] {
    [x[0], x[1], x[2], x[3], u[0], u[1]]
}

/// Central-difference Jacobian of the discrete step with respect to `[state, control]`.
fn jacobian(w: &[f64; 6], dt: f64) -> [[f64; 6]; 4] {
    let mut jac = [[0.0; 6]; 4];
    for j in 0..6 {
        let mut wp = *w;
        let mut wm = *w;
        wp[j] += FD_STEP;
        wm[j] -= FD_STEP;
        let fp = step(&wp, dt);
        let fm = step(&wm, dt);
        for i in 0..4 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

/// Hessian of `-mult . step(w)`, the curvature the dynamics constraints
/// contribute to the Lagrangian.
fn lagrangian_hessian(w: &[f64; 6], dt: f64, mult: &[f64; 4]) -> Matrix6<f64> {
    let mut h = Matrix6::zeros();
    for b in 0..6 {
        let mut wp = *w;
        let mut wm = *w;
        wp[b] += HESS_STEP;
        wm[b] -= HESS_STEP;
        let jp = jacobian(&wp, dt);
        let jm = jacobian(&wm, dt);
        for a in 0..6 {
            h[(a, b)] = -(0..4)
                .map(|i| mult[i] * (jp[i][a] - jm[i][a]) / (2.0 * HESS_STEP))
                .sum::<f64>();
        }
    }
    (h + h.transpose()) * 0.5
}

fn psd_part(h: Matrix6<f64>) -> Matrix6<f64> {
    let eig = h.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    eig.eigenvectors * Matrix6::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Sparse constraint rows `sum coef * var (=|<=) rhs`.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn push(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let r = self.rhs.len();
        for &(j, v) in terms {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.rhs.push(rhs);
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }
}

struct Layout {
    n: usize,
}

impl Layout {
    fn x(&self, k: usize, i: usize) -> usize {
        4 * k + i
    }
    fn u(&self, k: usize, i: usize) -> usize {
        4 * self.n + 2 * k + i
    }
    fn p(&self, k: usize, i: usize) -> usize {
        4 * self.n + 2 * (self.n - 1) + 4 * k + i
    }
    fn q(&self, k: usize, i: usize) -> usize {
        4 * self.n + 6 * (self.n - 1) + 4 * k + i
    }
    fn vars(&self) -> usize {
        4 * self.n + 10 * (self.n - 1)
    }
}

struct Step {
    next: Iterate,
    /// Subproblem model of the merit at `next`.
    model: f64,
    /// Multipliers of the linearized dynamics rows.
    multipliers: Vec<[f64; 4]>,
}

/// Solves one convex subproblem; `None` when the solver does not reach a solution.
fn subproblem(
    problem: &NominalProblem,
    cur: &Iterate,
    multipliers: &[[f64; 4]],
    regions: &[usize],
    radius: f64,
    penalty: f64,
    correction: Option<&[[f64; 4]]>,
) -> Option<Step> {
    let n = problem.nodes;
    let dt = problem.dt();
    let lay = Layout { n };
    let nv = lay.vars();

    let mut eq = Rows::default();
    let start = problem.start.to_array();
    let goal = problem.goal.to_array();
    for i in 0..4 {
        eq.push(&[(lay.x(0, i), 1.0)], start[i]);
        eq.push(&[(lay.x(n - 1, i), 1.0)], goal[i]);
    }
    let dyn_row0 = eq.len();
    let mut curvature = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let w = stack(&cur.x[k], cur.u[k]);
        let jac = jacobian(&w, dt);
        let f = step(&w, dt);
        let cols: [usize; 6] =
            [lay.x(k, 0), lay.x(k, 1), lay.x(k, 2), lay.x(k, 3), lay.u(k, 0), lay.u(k, 1)];
        for i in 0..4 {
            let mut terms = vec![(lay.x(k + 1, i), 1.0), (lay.p(k, i), -1.0), (lay.q(k, i), 1.0)];
            let mut c = f[i] + correction.map_or(0.0, |r| r[k][i]);
            for j in 0..6 {
                terms.push((cols[j], -jac[i][j]));
                c -= jac[i][j] * w[j];
            }
            eq.push(&terms, c);
        }
        let h = if multipliers[k].iter().any(|m| *m != 0.0) {
            Some(psd_part(lagrangian_hessian(&w, dt, &multipliers[k])))
        } else {
            None
        };
        curvature.push((cols, w, h));
    }

    let mut ineq = Rows::default();
    for k in 0..n - 1 {
        for i in 0..4 {
            ineq.push(&[(lay.p(k, i), -1.0)], 0.0);
            ineq.push(&[(lay.q(k, i), -1.0)], 0.0);
        }
        for (i, bound) in [problem.accel_max, problem.omega_max].into_iter().enumerate() {
            ineq.push(&[(lay.u(k, i), 1.0)], bound);
            ineq.push(&[(lay.u(k, i), -1.0)], bound);
        }
    }
    for k in 0..n {
        ineq.push(&[(lay.x(k, 3), -1.0)], 0.0);
        let region = &problem.corridor.regions[regions[k]];
        for h in &region.planes {
            ineq.push(&[(lay.x(k, 0), h.normal[0]), (lay.x(k, 1), h.normal[1])], h.offset);
        }
        for i in 0..4 {
            ineq.push(&[(lay.x(k, i), 1.0)], cur.x[k][i] + radius);
            ineq.push(&[(lay.x(k, i), -1.0)], radius - cur.x[k][i]);
        }
    }

    let n_eq = eq.len();
    let n_ineq = ineq.len();
    let mut ai = eq.i;
    let mut aj = eq.j;
    let mut av = eq.v;
    ai.extend(ineq.i.iter().map(|r| r + n_eq));
    aj.extend(ineq.j);
    av.extend(ineq.v);
    let mut b = eq.rhs;
    b.extend(ineq.rhs);
    let a_mat = CscMatrix::new_from_triplets(n_eq + n_ineq, nv, ai, aj, av);

    // Effort on the controls plus the dynamics curvature about the current
    // iterate, expanded as 1/2 (v - w)' H (v - w). Upper triangle only.
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    let mut q = vec![0.0; nv];
    for k in 0..n - 1 {
        for i in 0..2 {
            pi.push(lay.u(k, i));
            pj.push(lay.u(k, i));
            pv.push(2.0 * dt);
        }
        for i in 0..4 {
            q[lay.p(k, i)] = penalty;
            q[lay.q(k, i)] = penalty;
        }
    }
    for (cols, w, h) in &curvature {
        let Some(h) = h else { continue };
        for a in 0..6 {
            q[cols[a]] -= (0..6).map(|b| h[(a, b)] * w[b]).sum::<f64>();
            for b in a..6 {
                if h[(a, b)] != 0.0 {
                    pi.push(cols[a]);
                    pj.push(cols[b]);
                    pv.push(h[(a, b)]);
                }
            }
        }
    }
    let p_mat = CscMatrix::new_from_triplets(nv, nv, pi, pj, pv);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .expect("static solver settings are valid");
    let cones = [ZeroConeT(n_eq), NonnegativeConeT(n_ineq)];
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings).ok()?;
    solver.solve();
    if !matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        return None;
    }
    let sol = &solver.solution.x;
    let x: Vec<[f64; 4]> = (0..n).map(|k| std::array::from_fn(|i| sol[lay.x(k, i)])).collect();
    let u: Vec<[f64; 2]> = (0..n - 1).map(|k| std::array::from_fn(|i| sol[lay.u(k, i)])).collect();
    let virt: f64 = (0..n - 1)
        .flat_map(|k| (0..4).map(move |i| (k, i)))
        .map(|(k, i)| sol[lay.p(k, i)].max(0.0) + sol[lay.q(k, i)].max(0.0))
        .sum();
    let mut quad = 0.0;
    for (k, (_, w, h)) in curvature.iter().enumerate() {
        let Some(h) = h else { continue };
        let v = stack(&x[k], u[k]);
        let d: [f64; 6] = std::array::from_fn(|i| v[i] - w[i]);
        for a in 0..6 {
            for b in 0..6 {
                quad += 0.5 * d[a] * h[(a, b)] * d[b];
            }
        }
    }
    let z = &solver.solution.z;
    let multipliers =
        (0..n - 1).map(|k| std::array::from_fn(|i| z[dyn_row0 + 4 * k + i])).collect();
    let next = Iterate { x, u };
    let model = next.effort(dt) + quad + penalty * virt;
    Some(Step { next, model, multipliers })
}

/// Remainder of the linear dynamics model at `cand`: `F(v) - F(w) - J (v - w)`.
fn second_order_remainder(cur: &Iterate, cand: &Iterate, dt: f64) -> Vec<[f64; 4]> {
    (0..cur.u.len())
        .map(|k| {
            let w = stack(&cur.x[k], cur.u[k]);
            let v = stack(&cand.x[k], cand.u[k]);
            let jac = jacobian(&w, dt);
            let fw = step(&w, dt);
            let fv = step(&v, dt);
            std::array::from_fn(|i| fv[i] - fw[i] - (0..6).map(|j| jac[i][j] * (v[j] - w[j])).sum::<f64>())
        })
        .collect()
}

fn max_position_change(a: &Iterate, b: &Iterate) -> f64 {
    a.x.iter()
        .zip(&b.x)
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(0.0, f64::max)
}

/// Solves the nominal problem by successive convexification. Each subproblem
/// carries the positive semidefinite part of the dynamics curvature weighted
/// by the previous multipliers, which restores fast local convergence along
/// path-shape directions that the effort term alone does not see.
pub fn solve_nominal(problem: &NominalProblem, options: &ScvxOptions) -> Result<NominalSolution> {
    problem.validate()?;
    let dt = problem.dt();
    let penalty = options.virtual_penalty;
    let (x, u) = problem.initial();
    let mut cur = Iterate { x, u };
    let regions: Vec<usize> =
        cur.x.iter().map(|s| problem.corridor.assign([s[0], s[1]], MEMBERSHIP_TOL)).collect();
    let mut multipliers = vec![[0.0; 4]; problem.nodes - 1];
    let mut merit = cur.merit(dt, penalty);
    let mut history = vec![merit];
    let mut radius = options.trust_radius;
    let mut failures = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let Some(trial) = subproblem(problem, &cur, &multipliers, &regions, radius, penalty, None)
        else {
            failures += 1;
            if failures >= MAX_SOLVE_FAILURES {
                return Err(Error::InfeasibleProblem(format!(
                    "convex subproblem has no solution down to trust radius {radius:.3e}"
                )));
            }
            radius *= 0.5;
            continue;
        };
        failures = 0;
        let predicted = merit - trial.model;
        let mut cand = trial.next;
        let mut cand_mult = trial.multipliers;
        let mut cand_merit = cand.merit(dt, penalty);
        if merit - cand_merit < 0.75 * predicted {
            // Second-order correction: re-solve with the curvature of the
            // dynamics at the trial point folded into the constraints.
            let r = second_order_remainder(&cur, &cand, dt);
            if let Some(soc) =
                subproblem(problem, &cur, &multipliers, &regions, radius, penalty, Some(&r))
            {
                let soc_merit = soc.next.merit(dt, penalty);
                if soc_merit < cand_merit {
                    cand = soc.next;
                    cand_mult = soc.multipliers;
                    cand_merit = soc_merit;
                }
            }
        }
        let step = max_position_change(&cur, &cand);
        let actual = merit - cand_merit;
        log::debug!(
            "scvx iter {iterations}: radius {radius:.3e} step {step:.3e} merit {merit:.6e} -> {cand_merit:.6e} predicted {predicted:.3e}"
        );
        let feasible = cand.max_position_defect(dt) <= options.tolerance;
        if actual > 0.0 {
            cur = cand;
            merit = cand_merit;
            multipliers = cand_mult;
            history.push(merit);
            let rho = if predicted > 0.0 { actual / predicted } else { 1.0 };
            if rho > 0.75 {
                radius = (2.0 * radius).min(options.trust_radius_max);
            } else if rho < 0.25 {
                radius *= 0.5;
            }
            if step < options.tolerance && feasible {
                converged = true;
                break;
            }
        } else {
            // The model sees no further progress from a feasible point.
            if step < options.tolerance && cur.max_position_defect(dt) <= options.tolerance {
                converged = true;
                break;
            }
            radius *= 0.5;
        }
    }
    if !converged {
        log::warn!("nominal solve stopped after {iterations} iterations without converging");
    }
    let states = cur.x.iter().map(|s| UnicycleState::from_array(*s)).collect();
    let trajectory = NominalTrajectory::new(states, cur.u, dt)?;
    Ok(NominalSolution { trajectory, converged, iterations, objective_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobian_matches_linear_perturbation() {
        let w = [1.0, -3.0, 0.4, 5.0, 0.3, -0.2];
        let jac = jacobian(&w, 0.2);
        let d = [1e-5, -2e-5, 3e-5, 1e-5, 2e-5, -1e-5];
        let wp: [f64; 6] = std::array::from_fn(|i| w[i] + d[i]);
        let f0 = step(&w, 0.2);
        let f1 = step(&wp, 0.2);
        for i in 0..4 {
            let lin: f64 = f0[i] + (0..6).map(|j| jac[i][j] * d[j]).sum::<f64>();
            assert_abs_diff_eq!(lin, f1[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn hessian_is_psd_and_matches_second_difference() {
        let w = [1.0, -3.0, 0.4, 5.0, 0.3, -0.2];
        let mult = [1.0, 0.0, 0.0, 0.0];
        let h = lagrangian_hessian(&w, 0.2, &mult);
        let p = psd_part(h);
        assert!(p.symmetric_eigen().eigenvalues.iter().all(|l| *l >= -1e-12));
        let e = 1e-3;
        let f = |t: f64| {
            let mut v = w;
            v[2] += t;
            -step(&v, 0.2)[0]
        };
        let second = (f(e) - 2.0 * f(0.0) + f(-e)) / (e * e);
        assert_abs_diff_eq!(h[(2, 2)], second, epsilon = 1e-4);
    }

    #[test]
    fn straight_corridor_needs_no_turning() {
        let sol = solve_nominal(&straight_problem(5.0).unwrap(), &ScvxOptions::default()).unwrap();
        assert!(sol.converged);
        let w = sol.trajectory.controls.iter().map(|u| u[1].abs()).fold(0.0, f64::max);
        assert!(w <= 1e-4, "max |omega| = {w}");
    }

    #[test]
    fn goal_outside_corridor_is_infeasible() {
        let mut p = standard_left_turn(5.0).unwrap();
        p.goal.pos = [-20.0, -20.0];
        assert!(matches!(solve_nominal(&p, &ScvxOptions::default()), Err(Error::InfeasibleProblem(_))));
    }

    #[test]
    fn standard_instance_start_lies_on_boundary() {
        let p = standard_left_turn(5.0).unwrap();
        assert_abs_diff_eq!(p.start.pos[0].hypot(p.start.pos[1]), BOUNDARY_RADIUS, epsilon = 1e-12);
        assert_abs_diff_eq!(p.goal.pos[0].hypot(p.goal.pos[1]), BOUNDARY_RADIUS, epsilon = 1e-12);
        let g = p.guess.as_ref().unwrap();
        let end = g.states.last().unwrap();
        assert_abs_diff_eq!(end.pos[0], p.goal.pos[0], epsilon = 1e-9);
        assert_abs_diff_eq!(end.pos[1], p.goal.pos[1], epsilon = 1e-9);
    }

    #[test]
    fn standard_left_turn_converges() {
        let p = standard_left_turn(5.0).unwrap();
        let sol = solve_nominal(&p, &ScvxOptions::default()).unwrap();
        assert!(sol.converged, "iterations {}", sol.iterations);
        assert!(sol.iterations <= 30);
        assert!(sol.trajectory.max_step_residual() <= 1e-3);
        for s in &sol.trajectory.states {
            assert!(p.corridor.contains(s.pos, 1e-6), "{:?}", s.pos);
        }
        for w in sol.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn converges_across_entry_speeds() {
        for speed in [3.0, 4.5, 6.0, 8.0] {
            let p = standard_left_turn(speed).unwrap();
            let sol = solve_nominal(&p, &ScvxOptions::default()).unwrap();
            assert!(sol.converged, "speed {speed}: {} iterations", sol.iterations);
            assert!(sol.trajectory.max_step_residual() <= 1e-3);
        }
    }

    #[test]
    fn wide_corridor_matches_constant_turn_arc() {
        // Without binding lane constraints the minimum-effort quarter turn is
        // the constant-rate arc tangent to both the start and goal headings.
        let base = standard_left_turn(5.0).unwrap();
        let radius = base.start.pos[0] - base.goal.pos[0];
        let centre = [base.goal.pos[0], base.start.pos[1]];
        let duration = radius * PI / 2.0 / 5.0;
        let problem = NominalProblem {
            corridor: Corridor::unbounded(),
            duration,
            guess: None,
            ..base
        };
        let sol = solve_nominal(&problem, &ScvxOptions::default()).unwrap();
        assert!(sol.converged);
        for s in &sol.trajectory.states {
            let r = (s.pos[0] - centre[0]).hypot(s.pos[1] - centre[1]);
            assert!((r - radius).abs() <= 0.5, "radius {r} vs {radius}");
        }
        for u in &sol.trajectory.controls {
            assert_abs_diff_eq!(u[1], -5.0 / radius, epsilon = 1e-2);
        }
    }
}
