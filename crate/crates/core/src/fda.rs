//! Feasible direction algorithm: projected Polak-Ribière conjugate gradients
//! with Armijo backtracking, operating in the reduced space of the controls.
//!
//! Every iterate stays inside the control box and the objective never
//! increases from one iterate to the next.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::PlanningProblem;
use crate::kinematics::{rollout, ControlBounds, ControlTrajectory, VehicleState};

/// Smallest step length the line search will try.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Threshold on the Euclidean norm of the projected gradient.
    pub grad_tol: f64,
    pub ls_shrink: f64,
    pub ls_c1: f64,
    /// Iterations between forced steepest-descent restarts.
    pub cg_restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            grad_tol: 1e-3,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            cg_restart: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations < 1 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return Err("grad_tol must be positive".into());
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return Err("ls_shrink must lie in (0, 1)".into());
        }
        if !(self.ls_c1 > 0.0 && self.ls_c1 < 1.0) {
            return Err("ls_c1 must lie in (0, 1)".into());
        }
        if self.cg_restart < 1 {
            return Err("cg_restart must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FdaError {
    #[error("objective evaluated to a non-finite value")]
    NonFiniteCost,
    #[error("line search step fell below {MIN_STEP:e}")]
    StepFailure,
}

/// A smooth objective over a flat decision vector.
pub trait Objective {
    fn value(&self, u: &[f64]) -> f64;
    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64;
}

impl Objective for PlanningProblem {
    fn value(&self, u: &[f64]) -> f64 {
        self.value_flat(u)
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.value_and_gradient_flat(u, grad)
    }
}

/// Componentwise box on the flat decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    /// Bounds for `horizon` interleaved `[jx, ay]` pairs.
    pub fn for_controls(bounds: &ControlBounds, horizon: usize) -> Self {
        let mut lower = Vec::with_capacity(2 * horizon);
        let mut upper = Vec::with_capacity(2 * horizon);
        for _ in 0..horizon {
            lower.extend([bounds.jx_min, bounds.ay_min]);
            upper.extend([bounds.jx_max, bounds.ay_max]);
        }
        Self { lower, upper }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// Pin every lateral entry to its value in `u`.
    pub fn freeze_lateral(mut self, u: &[f64]) -> Self {
        for i in (1..u.len()).step_by(2) {
            self.lower[i] = u[i];
            self.upper[i] = u[i];
        }
        self
    }

    pub fn project(&self, u: &mut [f64]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *v >= *lo && *v <= *hi)
    }

    /// Gradient with components that push against an active bound removed.
    fn projected_gradient(&self, u: &[f64], g: &[f64], out: &mut [f64]) {
        for i in 0..u.len() {
            let at_lower = u[i] <= self.lower[i] && g[i] > 0.0;
            let at_upper = u[i] >= self.upper[i] && g[i] < 0.0;
            out[i] = if at_lower || at_upper { 0.0 } else { g[i] };
        }
    }

    /// Drop direction components that would leave the box immediately.
    fn restrict_direction(&self, u: &[f64], d: &mut [f64]) {
        for i in 0..u.len() {
            if (u[i] <= self.lower[i] && d[i] < 0.0) || (u[i] >= self.upper[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
    }
}

/// Clamp every control into `bounds`.
pub fn project_controls(u: &ControlTrajectory, bounds: &ControlBounds) -> ControlTrajectory {
    ControlTrajectory::new(u.steps.iter().map(|c| bounds.clamp(*c)).collect(), u.dt)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accepted line-search step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub alpha: f64,
    pub point: Vec<f64>,
    pub value: f64,
}

/// Armijo line search along the projected arc `P(u + alpha * dir)`.
///
/// Sufficient decrease is measured against the actual (projected) move, which
/// reduces to the classical `c1 * alpha * grad . dir` whenever no bound is hit.
/// Trial steps start at `alpha = 1`; a rejected trial is replaced by the
/// minimizer of the quadratic interpolant, safeguarded to
/// `[0.1, ls_shrink] * alpha`. Once a step is accepted, the interpolant through
/// the accepted point is used for one refinement (and doubling is tried while
/// it keeps improving), so the returned step approximates the exact minimizer
/// along the arc.
pub fn line_search<O: Objective + ?Sized>(
    obj: &O,
    u: &[f64],
    dir: &[f64],
    value: f64,
    grad: &[f64],
    bounds: &BoxBounds,
    cfg: &SolverConfig,
) -> Result<Step, FdaError> {
    let slope = dot(grad, dir);
    let eval = |alpha: f64| -> (Vec<f64>, f64, f64) {
        let mut trial: Vec<f64> = u.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        bounds.project(&mut trial);
        let moved: f64 = (0..u.len()).map(|i| grad[i] * (trial[i] - u[i])).sum();
        let f = if moved < 0.0 { obj.value(&trial) } else { f64::INFINITY };
        (trial, f, moved)
    };
    let accepts = |f: f64, moved: f64| f.is_finite() && moved < 0.0 && f < value && f <= value + cfg.ls_c1 * moved;
    // Minimizer of the quadratic through (0, value) with slope `slope` and (alpha, f).
    let interpolate = |alpha: f64, f: f64| -> Option<f64> {
        let curvature = f - value - slope * alpha;
        (curvature > 0.0 && slope < 0.0).then(|| -slope * alpha * alpha / (2.0 * curvature))
    };

    let mut alpha = 1.0;
    loop {
        if alpha < MIN_STEP {
            return Err(FdaError::StepFailure);
        }
        let (point, f, moved) = eval(alpha);
        if accepts(f, moved) {
            let mut best = Step { alpha, point, value: f };
            // Expand while the objective keeps dropping.
            let mut grow = alpha;
            let mut expansions = 0;
            while best.alpha == grow && expansions < 4 {
                grow *= 2.0;
                expansions += 1;
                let (p2, f2, m2) = eval(grow);
                if accepts(f2, m2) && f2 < best.value {
                    best = Step { alpha: grow, point: p2, value: f2 };
                }
            }
            if let Some(a) = interpolate(best.alpha, best.value) {
                if a > 0.0 && (a - best.alpha).abs() > 1e-3 * best.alpha {
                    let (p3, f3, m3) = eval(a);
                    if accepts(f3, m3) && f3 < best.value {
                        best = Step { alpha: a, point: p3, value: f3 };
                    }
                }
            }
            return Ok(best);
        }
        let shrunk = alpha * cfg.ls_shrink;
        alpha = match interpolate(alpha, f) {
            Some(a) if a.is_finite() => a.clamp(0.1 * alpha, shrunk),
            _ => shrunk,
        };
    }
}

/// Outcome of [`minimize`] on a flat decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Objective value at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Projected conjugate-gradient descent from `u0` (projected into the box first).
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    u0: &[f64],
    bounds: &BoxBounds,
    cfg: &SolverConfig,
) -> Result<Minimum, FdaError> {
    let n = u0.len();
    let mut u = u0.to_vec();
    bounds.project(&mut u);

    let mut g = vec![0.0; n];
    let mut value = obj.value_and_gradient(&u, &mut g);
    if !value.is_finite() {
        return Err(FdaError::NonFiniteCost);
    }
    let mut history = vec![value];
    let mut pg = vec![0.0; n];
    bounds.projected_gradient(&u, &g, &mut pg);
    let mut pg_sq = dot(&pg, &pg);
    let mut dir: Vec<f64> = pg.iter().map(|v| -v).collect();
    let mut iterations = 0;
    let mut since_restart = 0;
    let mut g_new = vec![0.0; n];
    let mut pg_new = vec![0.0; n];

    while pg_sq.sqrt() > cfg.grad_tol && iterations < cfg.max_iterations {
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir.iter_mut().zip(&pg).for_each(|(d, p)| *d = -p);
            slope = dot(&g, &dir);
            since_restart = 0;
            if !(slope < 0.0) {
                break;
            }
        }
        let step = match line_search(obj, &u, &dir, value, &g, bounds, cfg) {
            Ok(step) => step,
            Err(FdaError::StepFailure) => break,
            Err(e) => return Err(e),
        };
        iterations += 1;
        since_restart += 1;
        u = step.point;
        value = obj.value_and_gradient(&u, &mut g_new);
        if !value.is_finite() {
            return Err(FdaError::NonFiniteCost);
        }
        history.push(value);
        bounds.projected_gradient(&u, &g_new, &mut pg_new);
        let pg_new_sq = dot(&pg_new, &pg_new);

        let beta = if since_restart >= cfg.cg_restart || pg_sq == 0.0 {
            since_restart = 0;
            0.0
        } else {
            let num: f64 = pg_new.iter().zip(&pg).map(|(a, b)| a * (a - b)).sum();
            (num / pg_sq).max(0.0)
        };
        for i in 0..n {
            dir[i] = -pg_new[i] + beta * dir[i];
        }
        bounds.restrict_direction(&u, &mut dir);

        std::mem::swap(&mut g, &mut g_new);
        std::mem::swap(&mut pg, &mut pg_new);
        pg_sq = pg_new_sq;
    }

    let grad_norm = pg_sq.sqrt();
    Ok(Minimum {
        point: u,
        value,
        history,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
        grad_norm,
    })
}

/// Optimized controls for one planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub controls: ControlTrajectory,
    pub states: Vec<VehicleState>,
    pub cost: f64,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Solve the planning problem from the initial guess `u0`.
pub fn solve(problem: &PlanningProblem, u0: &ControlTrajectory, cfg: &SolverConfig) -> Result<SolveResult, FdaError> {
    let bounds = BoxBounds::for_controls(&problem.bounds, u0.len());
    solve_within(problem, u0, &bounds, cfg)
}

/// As [`solve`] but with an explicit (possibly per-entry) box.
pub fn solve_within(
    problem: &PlanningProblem,
    u0: &ControlTrajectory,
    bounds: &BoxBounds,
    cfg: &SolverConfig,
) -> Result<SolveResult, FdaError> {
    let min = minimize(problem, &u0.to_flat(), bounds, cfg)?;
    let controls = ControlTrajectory::from_flat(&min.point, u0.dt);
    let states = rollout(&problem.initial, &controls);
    Ok(SolveResult {
        controls,
        states,
        cost: min.value,
        cost_history: min.history,
        iterations: min.iterations,
        converged: min.converged,
        grad_norm: min.grad_norm,
    })
}
