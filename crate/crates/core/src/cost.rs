//! Planning objective: comfort, advancement, road-boundary, obstacle and
//! negative-speed penalties summed over the horizon, together with the exact
//! gradient with respect to every control entry.
//!
//! The gradient is obtained by a backward adjoint sweep over the linear
//! dynamics of [`crate::kinematics`]; states are eliminated, so the result is
//! the reduced gradient in control space.

use serde::{Deserialize, Serialize};

use crate::kinematics::{rollout, ControlBounds, ControlInput, ControlTrajectory, VehicleState};

/// Non-negative penalty weights of the objective, plus the smoothing
/// parameter of the negative-speed term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub jerk: f64,
    pub long_accel: f64,
    pub lat_accel: f64,
    pub speed: f64,
    pub lat_speed: f64,
    pub road: f64,
    pub collision: f64,
    pub negative_speed: f64,
    pub epsilon: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            jerk: 1.5,
            long_accel: 1.0,
            lat_accel: 1.5,
            speed: 0.05,
            lat_speed: 1.0,
            road: 15.0,
            collision: 15.0,
            negative_speed: 1.0,
            epsilon: 0.1,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("jerk", self.jerk),
            ("long_accel", self.long_accel),
            ("lat_accel", self.lat_accel),
            ("speed", self.speed),
            ("lat_speed", self.lat_speed),
            ("road", self.road),
            ("collision", self.collision),
            ("negative_speed", self.negative_speed),
        ];
        for (name, w) in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err("epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Straight multi-lane road. Lateral coordinate 0 is the right edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_width: f64,
    pub lanes: usize,
    /// Distance from either road edge inside which the road penalty is active.
    pub margin: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_width: 3.0,
            lanes: 3,
            margin: 1.4,
        }
    }
}

impl RoadGeometry {
    pub fn width(&self) -> f64 {
        self.lane_width * self.lanes as f64
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Discrete lane holding lateral position `y`; lane boundaries belong to
    /// the upper lane and `y = width` maps to the leftmost lane. Positions
    /// off the road are clamped to the nearest edge lane.
    pub fn lane_of(&self, y: f64) -> usize {
        if !(y > 0.0) {
            return 0;
        }
        let lane = (y / self.lane_width).floor() as usize;
        lane.min(self.lanes - 1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lanes == 0 {
            return Err("lanes must be at least 1".into());
        }
        if !(self.lane_width > 0.0) {
            return Err("lane_width must be positive".into());
        }
        if !(self.margin > 0.0 && self.margin < self.lane_width) {
            return Err("margin must lie strictly between 0 and lane_width".into());
        }
        Ok(())
    }
}

/// Desired longitudinal and lateral speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingGoals {
    pub vx: f64,
    pub vy: f64,
}

impl DrivingGoals {
    pub fn cruise(vx: f64) -> Self {
        Self { vx, vy: 0.0 }
    }
}

/// Predicted obstacle sample at one planning step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObstaclePoint {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
}

/// Even exponents controlling how rectangular the penalty ellipse is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseShape {
    pub p_long: u32,
    pub p_lat: u32,
}

impl Default for EllipseShape {
    fn default() -> Self {
        Self { p_long: 18, p_lat: 18 }
    }
}

impl EllipseShape {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_long", self.p_long), ("p_lat", self.p_lat)] {
            if p == 0 || p % 2 != 0 {
                return Err(format!("{name} must be a positive even integer"));
            }
        }
        Ok(())
    }
}

/// Collision penalty region for one obstacle over the planning horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEllipse {
    /// One sample per ego planning step, index 0 at plan time.
    pub trajectory: Vec<ObstaclePoint>,
    /// Centre-to-centre contact distance `(ego length + obstacle length) / 2`.
    pub length_term: f64,
    /// Ego time gap.
    pub time_gap: f64,
    /// Lateral ellipse size, equal to the lane width.
    pub lateral_size: f64,
    pub shape: EllipseShape,
}

/// Road-boundary penalty: zero on `[margin, width - margin]`, quadratic outside.
pub fn road_penalty(y: f64, g: &RoadGeometry) -> f64 {
    let lo = g.margin;
    let hi = g.width() - g.margin;
    if y < lo {
        (y - lo) * (y - lo)
    } else if y > hi {
        (y - hi) * (y - hi)
    } else {
        0.0
    }
}

fn road_penalty_slope(y: f64, g: &RoadGeometry) -> f64 {
    let lo = g.margin;
    let hi = g.width() - g.margin;
    if y < lo {
        2.0 * (y - lo)
    } else if y > hi {
        2.0 * (y - hi)
    } else {
        0.0
    }
}

/// Longitudinal ellipse size `r_x` and centre shift `s` for the given ego
/// and obstacle speeds.
pub fn ellipse_params(ego_vx: f64, obstacle_vx: f64, time_gap: f64, length_term: f64) -> (f64, f64) {
    let rx = time_gap * ego_vx + time_gap * obstacle_vx + length_term;
    let shift = time_gap * (ego_vx - obstacle_vx) / 2.0;
    (rx, shift)
}

/// Value and partial derivatives of one ellipse term.
#[derive(Debug, Clone, Copy)]
struct EllipseEval {
    value: f64,
    d_x: f64,
    d_y: f64,
    d_vx: f64,
}

fn ellipse_eval(
    dx: f64,
    dy: f64,
    ego_vx: f64,
    obstacle_vx: f64,
    time_gap: f64,
    length_term: f64,
    lateral_size: f64,
    shape: EllipseShape,
) -> EllipseEval {
    let (rx, shift) = ellipse_params(ego_vx, obstacle_vx, time_gap, length_term);
    let half_x = 0.5 * rx;
    let half_y = 0.5 * lateral_size;
    let u = (dx + shift) / half_x;
    let w = dy / half_y;
    let u_pm1 = u.powi(shape.p_long as i32 - 1);
    let w_pm1 = w.powi(shape.p_lat as i32 - 1);
    let denom = u_pm1 * u + w_pm1 * w + 1.0;
    let value = 1.0 / denom;
    let neg_v2 = -value * value;
    let dc_du = neg_v2 * shape.p_long as f64 * u_pm1;
    let dc_dw = neg_v2 * shape.p_lat as f64 * w_pm1;
    // u depends on ego speed through both the shift and the half length.
    let du_dv = 0.5 * time_gap * (1.0 - u) / half_x;
    EllipseEval {
        value,
        d_x: dc_du / half_x,
        d_y: dc_dw / half_y,
        d_vx: dc_du * du_dv,
    }
}

/// Obstacle penalty in `(0, 1]` for the ego at `(x, y)` with speed `ego_vx`
/// against obstacle sample `k`.
pub fn collision_penalty(x: f64, y: f64, ego_vx: f64, obs: &ObstacleEllipse, k: usize) -> f64 {
    let p = obs.trajectory[k];
    ellipse_eval(
        x - p.x,
        y - p.y,
        ego_vx,
        p.vx,
        obs.time_gap,
        obs.length_term,
        obs.lateral_size,
        obs.shape,
    )
    .value
}

/// Ellipse level `D` with `collision_penalty = 1 / (1 + D)`: below 1 inside
/// the ellipse, growing outward. Unlike the penalty it does not saturate.
pub fn ellipse_level(x: f64, y: f64, ego_vx: f64, obs: &ObstacleEllipse, k: usize) -> f64 {
    let p = obs.trajectory[k];
    let (rx, shift) = ellipse_params(ego_vx, p.vx, obs.time_gap, obs.length_term);
    let u = (x - p.x + shift) / (0.5 * rx);
    let w = (y - p.y) / (0.5 * obs.lateral_size);
    u.powi(obs.shape.p_long as i32) + w.powi(obs.shape.p_lat as i32)
}

/// Smooth penalty on negative longitudinal speed.
pub fn negative_speed_penalty(vx: f64, epsilon: f64) -> f64 {
    -vx + (vx * vx + epsilon).sqrt()
}

fn negative_speed_slope(vx: f64, epsilon: f64) -> f64 {
    -1.0 + vx / (vx * vx + epsilon).sqrt()
}

/// Weighted contribution of each objective term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub jerk: f64,
    pub long_accel: f64,
    pub lat_accel: f64,
    pub speed: f64,
    pub lat_speed: f64,
    pub road: f64,
    pub collision: f64,
    pub negative_speed: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.jerk
            + self.long_accel
            + self.lat_accel
            + self.speed
            + self.lat_speed
            + self.road
            + self.collision
            + self.negative_speed
    }
}

/// One optimal-control instance: initial state, obstacles and all
/// parameters needed to evaluate the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    pub initial: VehicleState,
    pub obstacles: Vec<ObstacleEllipse>,
    pub goals: DrivingGoals,
    pub weights: Weights,
    pub geometry: RoadGeometry,
    pub bounds: ControlBounds,
    pub horizon: usize,
    pub dt: f64,
}

impl PlanningProblem {
    fn stage(&self, k: usize, s: &VehicleState, u: &ControlInput, acc: &mut CostBreakdown) {
        let w = &self.weights;
        acc.jerk += w.jerk * u.jx * u.jx;
        acc.long_accel += w.long_accel * s.ax * s.ax;
        acc.lat_accel += w.lat_accel * u.ay * u.ay;
        let dv = s.vx - self.goals.vx;
        acc.speed += w.speed * dv * dv;
        let dvy = s.vy - self.goals.vy;
        acc.lat_speed += w.lat_speed * dvy * dvy;
        acc.road += w.road * road_penalty(s.y, &self.geometry);
        if w.collision != 0.0 {
            let c: f64 = self
                .obstacles
                .iter()
                .map(|o| collision_penalty(s.x, s.y, s.vx, o, k))
                .sum();
            acc.collision += w.collision * c;
        }
        acc.negative_speed += w.negative_speed * negative_speed_penalty(s.vx, w.epsilon);
    }

    /// Objective terms for the given controls.
    pub fn total_cost(&self, u: &ControlTrajectory) -> CostBreakdown {
        let states = rollout(&self.initial, u);
        self.cost_of_rollout(&states, u)
    }

    /// Objective terms when the rollout is already available.
    pub fn cost_of_rollout(&self, states: &[VehicleState], u: &ControlTrajectory) -> CostBreakdown {
        let mut acc = CostBreakdown::default();
        for (k, c) in u.steps.iter().enumerate() {
            self.stage(k, &states[k], c, &mut acc);
        }
        acc
    }

    /// Total cost and its gradient with respect to every control entry.
    pub fn reduced_gradient(&self, u: &ControlTrajectory) -> (f64, Vec<ControlInput>) {
        let mut grad = vec![0.0; 2 * u.len()];
        let cost = self.value_and_gradient_flat(&u.to_flat(), &mut grad);
        let g = grad
            .chunks_exact(2)
            .map(|c| ControlInput::new(c[0], c[1]))
            .collect();
        (cost, g)
    }

    pub(crate) fn value_flat(&self, flat: &[f64]) -> f64 {
        let dt = self.dt;
        let mut s = self.initial;
        let mut acc = CostBreakdown::default();
        for (k, c) in flat.chunks_exact(2).enumerate() {
            let u = ControlInput::new(c[0], c[1]);
            self.stage(k, &s, &u, &mut acc);
            s = crate::kinematics::step_state(&s, &u, dt);
        }
        acc.total()
    }

    /// Adjoint sweep. `grad` uses the interleaved `[jx, ay]` layout.
    pub(crate) fn value_and_gradient_flat(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let n = flat.len() / 2;
        debug_assert_eq!(grad.len(), flat.len());
        let dt = self.dt;
        let w = &self.weights;

        let mut states = Vec::with_capacity(n + 1);
        states.push(self.initial);
        for c in flat.chunks_exact(2) {
            let s = crate::kinematics::step_state(states.last().unwrap(), &ControlInput::new(c[0], c[1]), dt);
            states.push(s);
        }

        let mut acc = CostBreakdown::default();
        // Costate of (x, y, vx, vy, ax) at step k + 1. No terminal cost.
        let (mut lx, mut ly, mut lvx, mut lvy, mut lax) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let half_dt2 = 0.5 * dt * dt;
        let sixth_dt3 = dt * dt * dt / 6.0;
        for k in (0..n).rev() {
            let s = &states[k];
            let u = ControlInput::new(flat[2 * k], flat[2 * k + 1]);
            self.stage(k, s, &u, &mut acc);

            grad[2 * k] = 2.0 * w.jerk * u.jx + sixth_dt3 * lx + half_dt2 * lvx + dt * lax;
            grad[2 * k + 1] = 2.0 * w.lat_accel * u.ay + half_dt2 * ly + dt * lvy;

            // Partial derivatives of the stage cost with respect to the state.
            let mut gx = 0.0;
            let mut gy = w.road * road_penalty_slope(s.y, &self.geometry);
            let mut gvx = 2.0 * w.speed * (s.vx - self.goals.vx)
                + w.negative_speed * negative_speed_slope(s.vx, w.epsilon);
            let gvy = 2.0 * w.lat_speed * (s.vy - self.goals.vy);
            let gax = 2.0 * w.long_accel * s.ax;
            if w.collision != 0.0 {
                for o in &self.obstacles {
                    let p = o.trajectory[k];
                    let e = ellipse_eval(
                        s.x - p.x,
                        s.y - p.y,
                        s.vx,
                        p.vx,
                        o.time_gap,
                        o.length_term,
                        o.lateral_size,
                        o.shape,
                    );
                    gx += w.collision * e.d_x;
                    gy += w.collision * e.d_y;
                    gvx += w.collision * e.d_vx;
                }
            }

            let nlx = gx + lx;
            let nly = gy + ly;
            let nlvx = gvx + dt * lx + lvx;
            let nlvy = gvy + dt * ly + lvy;
            let nlax = gax + half_dt2 * lx + dt * lvx + lax;
            lx = nlx;
            ly = nly;
            lvx = nlvx;
            lvy = nlvy;
            lax = nlax;
        }
        acc.total()
    }
}
