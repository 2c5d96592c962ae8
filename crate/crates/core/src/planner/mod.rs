//! Receding-horizon planning for one automated vehicle.
//!
//! A plan is built by seeding the continuous solver with the lifted coarse
//! DP plan. Plans that come out unsafe are replaced by a shorter plan that
//! follows the current leader at a reduced speed. A plan is replaced when it
//! is half consumed or when one of the event triggers in [`needs_replan`]
//! fires.

mod predict;
mod replan;
mod safety;

pub use predict::{predict_obstacles, select_obstacles, Observed, ObstaclePrediction, PredictionSource};
pub use replan::{needs_replan, Trigger};
pub use safety::{check_safety, find_leader};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{DrivingGoals, EllipseShape, ObstacleEllipse, PlanningProblem, RoadGeometry, Weights};
use crate::dp_init::{lift_to_continuous, DpConfig, DpModel, DpPlan};
use crate::fda::{self, BoxBounds, SolverConfig};
use crate::kinematics::{rollout, ControlBounds, ControlInput, ControlTrajectory, VehicleState};

pub type VehicleId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Manual,
    AutomatedNonConnected,
    AutomatedConnected,
}

impl VehicleClass {
    pub fn is_automated(self) -> bool {
        self != VehicleClass::Manual
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Manual => "manual",
            VehicleClass::AutomatedNonConnected => "automated_non_connected",
            VehicleClass::AutomatedConnected => "automated_connected",
        }
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    pub horizon: usize,
    pub dt: f64,
    /// Obstacle zone ahead, as a multiple of desired speed times horizon.
    pub zone_ahead: f64,
    pub zone_behind: f64,
    pub override_speed_factor: f64,
    pub override_horizon_factor: f64,
    /// Speed deviation of an obstacle from its prediction that triggers a replan (m/s).
    pub replan_speed_threshold: f64,
    /// Collision penalty level above which a planned state is unsafe.
    pub safety_threshold: f64,
    pub weights: Weights,
    pub bounds: ControlBounds,
    pub ellipse: EllipseShape,
    pub solver: SolverConfig,
    pub dp: DpConfig,
    /// Also run (and time) backward DP for every plan.
    pub cross_check_dp: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            horizon: 32,
            dt: 0.25,
            zone_ahead: 1.0,
            zone_behind: 0.5,
            override_speed_factor: 0.95,
            override_horizon_factor: 0.5,
            replan_speed_threshold: 1.0,
            safety_threshold: 0.5,
            weights: Weights::default(),
            bounds: ControlBounds::default(),
            ellipse: EllipseShape::default(),
            solver: SolverConfig::default(),
            dp: DpConfig::default(),
            cross_check_dp: false,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon < 2 {
            return Err("horizon must be at least 2".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        for (name, f) in [
            ("override_speed_factor", self.override_speed_factor),
            ("override_horizon_factor", self.override_horizon_factor),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(format!("{name} must be in (0, 1]"));
            }
        }
        if !(self.zone_ahead > 0.0 && self.zone_behind >= 0.0) {
            return Err("zone factors must be positive".into());
        }
        if !(self.replan_speed_threshold > 0.0) {
            return Err("replan_speed_threshold must be positive".into());
        }
        if !(self.safety_threshold > 0.0 && self.safety_threshold < 1.0) {
            return Err("safety_threshold must be in (0, 1)".into());
        }
        let b = &self.bounds;
        if !(b.jx_min < 0.0 && b.jx_max > 0.0 && b.ay_min < 0.0 && b.ay_max > 0.0) {
            return Err("control bounds must contain zero".into());
        }
        self.weights.validate().map_err(|e| format!("weights.{e}"))?;
        self.ellipse.validate().map_err(|e| format!("ellipse.{e}"))?;
        self.solver.validate().map_err(|e| format!("solver.{e}"))?;
        self.dp.validate().map_err(|e| format!("dp.{e}"))?;
        let fine = self.horizon as f64 * self.dt;
        let coarse = self.dp.horizon as f64 * self.dp.step;
        if (fine - coarse).abs() > 1e-9 {
            return Err(format!("dp.horizon * dp.step ({coarse} s) must equal horizon * dt ({fine} s)"));
        }
        Ok(())
    }

    pub fn horizon_time(&self) -> f64 {
        self.horizon as f64 * self.dt
    }

    pub fn override_horizon(&self) -> usize {
        ((self.horizon as f64 * self.override_horizon_factor).round() as usize).max(1)
    }
}

/// The vehicle being planned for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ego {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub state: VehicleState,
    pub desired_speed: f64,
    pub time_gap: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Normal,
    /// Produced by the safety override.
    Override,
    /// Comfortable in-lane braking after planning failed.
    Braking,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Normal => "normal",
            PlanKind::Override => "override",
            PlanKind::Braking => "braking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanTimings {
    pub dp_backward_us: Option<u64>,
    pub dp_bnb_us: u64,
    pub fda_us: u64,
    pub total_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    /// `None` when no discrete plan was feasible.
    pub dp_cost: Option<f64>,
    pub fda_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dp_expansions: usize,
    pub timings: PlanTimings,
}

/// Open-loop plan applied from `created_at` until `valid_until`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub controls: ControlTrajectory,
    pub states: Vec<VehicleState>,
    pub cost: f64,
    pub created_at: f64,
    pub valid_until: f64,
    pub kind: PlanKind,
    pub desired_speed: f64,
    /// Obstacle predictions the plan was built against.
    pub predictions: Vec<ObstaclePrediction>,
    pub diagnostics: PlanDiagnostics,
}

impl Plan {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn safety_mode(&self) -> bool {
        self.kind != PlanKind::Normal
    }

    /// Whole plan steps elapsed at time `now`.
    pub fn step_index(&self, now: f64) -> usize {
        ((now - self.created_at) / self.controls.dt).round().max(0.0) as usize
    }

    pub fn control_at(&self, now: f64) -> Option<ControlInput> {
        self.controls.steps.get(self.step_index(now)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PlanningFailure {
    #[error("no safe plan found, even with the safety override")]
    Unsafe,
    #[error("the solver failed: {0}")]
    Solver(#[from] fda::FdaError),
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}

/// Obstacle penalty regions built from predictions, truncated to `horizon`.
pub fn obstacle_ellipses(
    ego: &Ego,
    predictions: &[ObstaclePrediction],
    geometry: &RoadGeometry,
    params: &PlannerParams,
    horizon: usize,
) -> Vec<ObstacleEllipse> {
    predictions
        .iter()
        .map(|p| ObstacleEllipse {
            trajectory: p.points[..=horizon.min(p.points.len() - 1)].to_vec(),
            length_term: 0.5 * (ego.length + p.length),
            time_gap: ego.time_gap,
            lateral_size: geometry.lane_width,
            shape: params.ellipse,
        })
        .collect()
}

struct Candidate {
    controls: ControlTrajectory,
    states: Vec<VehicleState>,
    cost: f64,
    obstacles: Vec<ObstacleEllipse>,
    diagnostics: PlanDiagnostics,
}

/// DP seed, lift and continuous refinement for one horizon and goal.
fn optimize(
    ego: &Ego,
    predictions: &[ObstaclePrediction],
    goals: DrivingGoals,
    horizon: usize,
    freeze_lateral: bool,
    geometry: &RoadGeometry,
    params: &PlannerParams,
) -> Result<Candidate, PlanningFailure> {
    let start = Instant::now();
    let obstacles = obstacle_ellipses(ego, predictions, geometry, params, horizon);
    let dp_cfg = DpConfig {
        horizon: ((horizon as f64 * params.dt / params.dp.step).round() as usize).max(1),
        max_lane_changes: if freeze_lateral { 0 } else { params.dp.max_lane_changes },
        ..params.dp
    };
    let model = DpModel::new(&ego.state, &obstacles, params.dt, &goals, geometry, &dp_cfg);

    let t = Instant::now();
    let dp = model.solve_forward_bnb();
    let dp_bnb_us = micros(t);
    let dp_backward_us = params.cross_check_dp.then(|| {
        let t = Instant::now();
        let backward = model.solve_backward();
        let us = micros(t);
        debug_assert_eq!(
            backward.as_ref().map(|p| p.cost_units).ok(),
            dp.as_ref().map(|p| p.cost_units).ok()
        );
        us
    });
    let (seed, dp_cost, dp_expansions) = match dp {
        Ok(plan) => {
            let (c, e) = (plan.cost, plan.stats.expanded);
            (plan, Some(c), e)
        }
        Err(_) => (DpPlan::braking(&ego.state, geometry, &dp_cfg), None, 0),
    };
    let mut u0 = lift_to_continuous(&seed, &ego.state, params.dt, horizon, geometry, &params.bounds, &dp_cfg);
    if freeze_lateral {
        u0.steps.iter_mut().for_each(|c| c.ay = 0.0);
    }

    let problem = PlanningProblem {
        initial: ego.state,
        obstacles,
        goals,
        weights: params.weights,
        geometry: *geometry,
        bounds: params.bounds,
        horizon,
        dt: params.dt,
    };
    let t = Instant::now();
    let mut bounds = BoxBounds::for_controls(&params.bounds, horizon);
    if freeze_lateral {
        bounds = bounds.freeze_lateral(&u0.to_flat());
    }
    let result = fda::solve_within(&problem, &u0, &bounds, &params.solver)?;
    let fda_us = micros(t);

    Ok(Candidate {
        controls: result.controls,
        states: result.states,
        cost: result.cost,
        obstacles: problem.obstacles,
        diagnostics: PlanDiagnostics {
            dp_cost,
            fda_cost: result.cost,
            iterations: result.iterations,
            converged: result.converged,
            dp_expansions,
            timings: PlanTimings {
                dp_backward_us,
                dp_bnb_us,
                fda_us,
                total_us: micros(start),
            },
        },
    })
}

fn finish(c: Candidate, kind: PlanKind, desired_speed: f64, predictions: &[ObstaclePrediction], now: f64, dt: f64) -> Plan {
    let horizon = c.controls.len();
    Plan {
        controls: c.controls,
        states: c.states,
        cost: c.cost,
        created_at: now,
        valid_until: now + horizon as f64 * dt / 2.0,
        kind,
        desired_speed,
        predictions: predictions.to_vec(),
        diagnostics: c.diagnostics,
    }
}

/// Plan for `ego` at time `now`, falling back to the safety override when
/// the regular plan is unsafe.
pub fn plan(
    ego: &Ego,
    predictions: &[ObstaclePrediction],
    geometry: &RoadGeometry,
    params: &PlannerParams,
    now: f64,
) -> Result<Plan, PlanningFailure> {
    let goals = DrivingGoals::cruise(ego.desired_speed);
    let c = optimize(ego, predictions, goals, params.horizon, false, geometry, params)?;
    if check_safety(&ego.state, &c.states, &c.obstacles, geometry, params.safety_threshold) {
        return Ok(finish(c, PlanKind::Normal, ego.desired_speed, predictions, now, params.dt));
    }
    safety_override(ego, predictions, geometry, params, now)
}

/// Shorter plan tracking a fraction of the leader's speed, or an in-lane
/// plan without lateral motion when there is no leader.
pub fn safety_override(
    ego: &Ego,
    predictions: &[ObstaclePrediction],
    geometry: &RoadGeometry,
    params: &PlannerParams,
    now: f64,
) -> Result<Plan, PlanningFailure> {
    let horizon = params.override_horizon();
    let (desired, freeze) = match find_leader(&ego.state, predictions, geometry) {
        Some(leader) => (params.override_speed_factor * leader.points[0].vx.max(0.0), false),
        None => (ego.desired_speed, true),
    };
    let c = optimize(ego, predictions, DrivingGoals::cruise(desired), horizon, freeze, geometry, params)?;
    if check_safety(&ego.state, &c.states, &c.obstacles, geometry, params.safety_threshold) {
        Ok(finish(c, PlanKind::Override, desired, predictions, now, params.dt))
    } else {
        Err(PlanningFailure::Unsafe)
    }
}

/// Longitudinal target of the braking fallback (m/s^2).
pub const BRAKING_DECELERATION: f64 = -3.0;

/// Strongest deceleration the fallback uses when the leader is too close
/// for comfortable braking (m/s^2).
pub const EMERGENCY_DECELERATION: f64 = -8.0;

/// Bumper gap the fallback aims to keep to a stopped leader (m).
const STANDSTILL_GAP: f64 = 1.0;

/// Deceleration that stops the ego behind its in-lane leader if the leader
/// brakes from now on, at least comfortably. Zero without a leader.
fn required_deceleration(ego: &Ego, predictions: &[ObstaclePrediction], geometry: &RoadGeometry, jx_max: f64, dt: f64) -> f64 {
    let Some(leader) = find_leader(&ego.state, predictions, geometry) else {
        return 0.0;
    };
    let p = leader.points[0];
    let v = ego.state.vx.max(0.0);
    let v_lead = p.vx.max(0.0);
    // A leader predicted to brake harder than comfortably is assumed to keep doing so.
    let lead_decel = leader
        .points
        .get(1)
        .map_or(0.0, |q| (p.vx - q.vx) / dt)
        .max(-BRAKING_DECELERATION);
    // Distance covered while the brake ramps up to the comfortable level.
    let ramp = v * ((ego.state.ax - BRAKING_DECELERATION) / jx_max).max(0.0) / 2.0;
    let room = p.x - ego.state.x - 0.5 * (ego.length + leader.length) - STANDSTILL_GAP - ramp
        + v_lead * v_lead / (2.0 * lead_decel);
    if room <= 0.0 {
        EMERGENCY_DECELERATION
    } else {
        -(v * v) / (2.0 * room)
    }
}

/// Smallest jerk not below `wanted` after which releasing the brake at
/// `jx_max` still stops at non-negative speed.
fn stopping_jerk(s: &VehicleState, wanted: f64, jx_max: f64, dt: f64) -> f64 {
    let stop_speed = |j: f64| {
        let a = s.ax + j * dt;
        let v = s.vx + s.ax * dt + 0.5 * j * dt * dt;
        if a < 0.0 {
            v - 0.5 * a * a / jx_max
        } else {
            v
        }
    };
    if stop_speed(wanted) >= 0.0 || stop_speed(jx_max) < 0.0 {
        return if stop_speed(wanted) >= 0.0 { wanted } else { jx_max };
    }
    let (mut lo, mut hi) = (wanted, jx_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stop_speed(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// In-lane braking with lateral centring: comfortable unless the leader is
/// too close, then as hard as needed up to the emergency level.
pub fn braking_plan(
    ego: &Ego,
    predictions: &[ObstaclePrediction],
    geometry: &RoadGeometry,
    params: &PlannerParams,
    now: f64,
) -> Plan {
    let dt = params.dt;
    let b = &params.bounds;
    let y_ref = geometry.lane_center(geometry.lane_of(ego.state.y));
    let decel = required_deceleration(ego, predictions, geometry, b.jx_max, params.dt).clamp(EMERGENCY_DECELERATION, BRAKING_DECELERATION);
    let mut s = ego.state;
    let mut steps = Vec::with_capacity(params.horizon);
    for _ in 0..params.horizon {
        // Ease off proportionally to speed over the last second before standstill.
        let target = decel.max(-s.vx.max(0.0));
        let jx = stopping_jerk(&s, ((target - s.ax) / dt).clamp(b.jx_min, b.jx_max), b.jx_max, dt);
        let ay = (crate::dp_init::LATERAL_STIFFNESS * (y_ref - s.y) - crate::dp_init::LATERAL_DAMPING * s.vy)
            .clamp(b.ay_min, b.ay_max);
        let u = ControlInput::new(jx, ay);
        s = crate::kinematics::step_state(&s, &u, dt);
        steps.push(u);
    }
    let controls = ControlTrajectory::new(steps, dt);
    let states = rollout(&ego.state, &controls);
    let obstacles = obstacle_ellipses(ego, predictions, geometry, params, params.horizon);
    let problem = PlanningProblem {
        initial: ego.state,
        obstacles,
        goals: DrivingGoals::cruise(ego.desired_speed),
        weights: params.weights,
        geometry: *geometry,
        bounds: params.bounds,
        horizon: params.horizon,
        dt,
    };
    let cost = problem.cost_of_rollout(&states, &controls).total();
    Plan {
        controls,
        states,
        cost,
        created_at: now,
        // Retry regular planning at the next step.
        valid_until: now + dt,
        kind: PlanKind::Braking,
        desired_speed: 0.0,
        predictions: predictions.to_vec(),
        diagnostics: PlanDiagnostics {
            dp_cost: None,
            fda_cost: cost,
            iterations: 0,
            converged: false,
            dp_expansions: 0,
            timings: PlanTimings::default(),
        },
    }
}
