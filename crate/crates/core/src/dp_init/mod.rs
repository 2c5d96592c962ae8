//! Coarse lane-based dynamic programming used to seed the continuous solver.
//!
//! The simplified problem uses a longer step, piecewise-constant longitudinal
//! acceleration from `{-a, 0, a}`, discrete lane moves from `{-1, 0, +1}` and
//! at most `max_lane_changes` lane changes per horizon. Infeasible
//! transitions (leaving the road, negative speed, entering an obstacle's
//! time-gap rectangle) are pruned rather than penalized.
//!
//! Stage costs are quantized to integer nano-units so that the backward
//! recursion and the forward branch-and-bound sum identical integers and
//! agree exactly.

mod backward;
mod bnb;
mod lift;

pub use backward::solve_backward;
pub use bnb::solve_forward_bnb;
pub use lift::{lift_to_continuous, LATERAL_DAMPING, LATERAL_STIFFNESS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{DrivingGoals, ObstacleEllipse, RoadGeometry};
use crate::kinematics::VehicleState;

/// Cost quantum of the discrete problem.
pub const COST_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpWeights {
    pub accel: f64,
    pub lane_change: f64,
    pub speed: f64,
}

impl Default for DpWeights {
    fn default() -> Self {
        Self {
            accel: 1.0,
            lane_change: 1.0,
            speed: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    /// Coarse time step (s).
    pub step: f64,
    /// Number of coarse steps.
    pub horizon: usize,
    /// Magnitude of the non-zero accelerations (m/s^2).
    pub accel_step: f64,
    pub max_lane_changes: u8,
    pub weights: DpWeights,
    /// Duration of the lateral manoeuvre used when lifting a lane change (s).
    pub lane_change_duration: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            horizon: 8,
            accel_step: 3.0,
            max_lane_changes: 1,
            weights: DpWeights::default(),
            lane_change_duration: 3.0,
        }
    }
}

impl DpConfig {
    /// Speed grid spacing, one acceleration step applied for one coarse step.
    pub fn speed_increment(&self) -> f64 {
        self.accel_step * self.step
    }

    /// Position grid spacing; every reachable displacement is a multiple of it.
    pub fn position_increment(&self) -> f64 {
        0.5 * self.accel_step * self.step * self.step
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.step > 0.0) {
            return Err("step must be positive".into());
        }
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if !(self.accel_step > 0.0) {
            return Err("accel_step must be positive".into());
        }
        if !(self.lane_change_duration > 0.0) {
            return Err("lane_change_duration must be positive".into());
        }
        let w = &self.weights;
        if !(w.accel >= 0.0 && w.lane_change >= 0.0 && w.speed >= 0.0) {
            return Err("weights must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DpError {
    #[error("every discrete trajectory from the initial state is infeasible")]
    NoFeasiblePlan,
}

/// Node of the discrete state lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DpState {
    pub k: usize,
    /// Position relative to the start, in position increments.
    pub x_idx: i64,
    /// Speed in speed increments; never negative.
    pub v_idx: i64,
    pub lane: usize,
    pub lane_changes: u8,
}

/// Discrete control: acceleration sign and lane move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DpAction {
    pub accel: i8,
    pub lateral: i8,
}

/// Actions in tie-break preference order: stay in lane first, then the lower
/// lane index; within a lane move, zero acceleration, then braking.
pub const ACTIONS: [DpAction; 9] = [
    DpAction { accel: 0, lateral: 0 },
    DpAction { accel: -1, lateral: 0 },
    DpAction { accel: 1, lateral: 0 },
    DpAction { accel: 0, lateral: -1 },
    DpAction { accel: -1, lateral: -1 },
    DpAction { accel: 1, lateral: -1 },
    DpAction { accel: 0, lateral: 1 },
    DpAction { accel: -1, lateral: 1 },
    DpAction { accel: 1, lateral: 1 },
];

/// Search statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DpStats {
    /// States whose outgoing transitions were evaluated.
    pub expanded: usize,
    pub transitions: usize,
}

/// Optimal discrete plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPlan {
    /// One acceleration (m/s^2) per coarse step.
    pub accel_seq: Vec<f64>,
    /// Lane at every coarse step boundary, `horizon + 1` entries.
    pub lane_seq: Vec<usize>,
    pub cost: f64,
    pub cost_units: u64,
    pub stats: DpStats,
}

impl DpPlan {
    pub fn lane_changes(&self) -> usize {
        self.lane_seq.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Full braking in the current lane until the speed grid reaches zero.
    pub fn braking(s0: &VehicleState, geometry: &RoadGeometry, cfg: &DpConfig) -> Self {
        let mut v = snap_speed(s0.vx, cfg);
        let mut accel_seq = Vec::with_capacity(cfg.horizon);
        for _ in 0..cfg.horizon {
            if v > 0 {
                accel_seq.push(-cfg.accel_step);
                v -= 1;
            } else {
                accel_seq.push(0.0);
            }
        }
        let lane = geometry.lane_of(s0.y);
        Self {
            accel_seq,
            lane_seq: vec![lane; cfg.horizon + 1],
            cost: f64::NAN,
            cost_units: 0,
            stats: DpStats::default(),
        }
    }
}

fn snap_speed(vx: f64, cfg: &DpConfig) -> i64 {
    (vx.max(0.0) / cfg.speed_increment()).round() as i64
}

pub fn quantize(cost: f64) -> u64 {
    (cost / COST_QUANTUM).round() as u64
}

/// Obstacle position at one coarse half-step, relative to the ego start.
#[derive(Debug, Clone, Copy)]
struct ObstacleSample {
    x: f64,
    vx: f64,
    lane: usize,
}

#[derive(Debug, Clone)]
struct DpObstacle {
    /// Indexed by coarse half-step `h`, time `h * step / 2`.
    samples: Vec<ObstacleSample>,
    length_term: f64,
    time_gap: f64,
    /// Already in conflict at the start (or following the ego in its lane):
    /// only physical contact, or passing through it, is excluded.
    contact_only: bool,
    /// Sign of the initial longitudinal gap `x_ego - x_obstacle`.
    behind_ego: bool,
}

/// The discretized problem: transition model, stage costs and feasibility.
#[derive(Debug, Clone)]
pub struct DpModel {
    cfg: DpConfig,
    lanes: usize,
    desired_speed: f64,
    initial: DpState,
    obstacles: Vec<DpObstacle>,
}

fn sample_at(traj: &[crate::cost::ObstaclePoint], fine_dt: f64, t: f64) -> (f64, f64, f64) {
    let pos = t / fine_dt;
    let last = traj.len() - 1;
    if pos >= last as f64 {
        let p = traj[last];
        return (p.x + p.vx * (t - last as f64 * fine_dt), p.y, p.vx);
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    let (a, b) = (traj[i], traj[i + 1]);
    (
        a.x + frac * (b.x - a.x),
        a.y + frac * (b.y - a.y),
        a.vx + frac * (b.vx - a.vx),
    )
}

impl DpModel {
    /// Snap the ego state to the grid (position origin at the ego, nearest
    /// speed level, current lane) and sample obstacles at coarse half-steps.
    pub fn new(
        s0: &VehicleState,
        obstacles: &[ObstacleEllipse],
        fine_dt: f64,
        goals: &DrivingGoals,
        geometry: &RoadGeometry,
        cfg: &DpConfig,
    ) -> Self {
        let lane0 = geometry.lane_of(s0.y);
        let initial = DpState {
            k: 0,
            x_idx: 0,
            v_idx: snap_speed(s0.vx, cfg),
            lane: lane0,
            lane_changes: 0,
        };
        let v0 = initial.v_idx as f64 * cfg.speed_increment();
        let half_steps = 2 * cfg.horizon;
        let obstacles = obstacles
            .iter()
            .filter(|o| !o.trajectory.is_empty())
            .map(|o| {
                let samples: Vec<ObstacleSample> = (0..=half_steps)
                    .map(|h| {
                        let t = h as f64 * cfg.step / 2.0;
                        let (x, y, vx) = sample_at(&o.trajectory, fine_dt, t);
                        ObstacleSample {
                            x: x - s0.x,
                            vx,
                            lane: geometry.lane_of(y),
                        }
                    })
                    .collect();
                let first = samples[0];
                let dx0 = -first.x;
                let contact_only = first.lane == lane0
                    && (dx0 > 0.0 || rectangle_contains(dx0, v0, first.vx, o.length_term, o.time_gap));
                DpObstacle {
                    samples,
                    length_term: o.length_term,
                    time_gap: o.time_gap,
                    contact_only,
                    behind_ego: dx0 > 0.0,
                }
            })
            .collect();
        Self {
            cfg: *cfg,
            lanes: geometry.lanes,
            desired_speed: goals.vx,
            initial,
            obstacles,
        }
    }

    pub fn config(&self) -> &DpConfig {
        &self.cfg
    }

    pub fn initial_state(&self) -> DpState {
        self.initial
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    pub fn speed(&self, v_idx: i64) -> f64 {
        v_idx as f64 * self.cfg.speed_increment()
    }

    /// Quantized stage cost of taking `action` at speed level `v_idx`.
    pub fn stage_cost(&self, v_idx: i64, action: DpAction) -> u64 {
        let w = &self.cfg.weights;
        let a = action.accel as f64 * self.cfg.accel_step;
        let uy = action.lateral as f64;
        let dv = self.speed(v_idx) - self.desired_speed;
        quantize(w.accel * a * a + w.lane_change * uy * uy + w.speed * dv * dv)
    }

    fn blocked(&self, h: usize, x: f64, v: f64, lane: usize) -> bool {
        self.obstacles.iter().any(|o| {
            let s = o.samples[h];
            if s.lane != lane {
                return false;
            }
            let dx = x - s.x;
            if o.contact_only {
                if o.behind_ego {
                    dx < o.length_term
                } else {
                    dx > -o.length_term
                }
            } else {
                rectangle_contains(dx, v, s.vx, o.length_term, o.time_gap)
            }
        })
    }

    /// True when an obstacle in `lane` at both half-steps changes side
    /// relative to the ego, which the sampled checks alone could miss.
    fn overtaken(&self, h: usize, x: [f64; 2], lane: usize) -> bool {
        self.obstacles.iter().any(|o| {
            let (a, b) = (o.samples[h], o.samples[h + 1]);
            a.lane == lane && b.lane == lane && ((x[0] - a.x) < 0.0) != ((x[1] - b.x) < 0.0)
        })
    }

    /// Successor of `s` under `action` with its stage cost, or `None` when
    /// the transition is infeasible.
    pub fn transition(&self, s: &DpState, action: DpAction) -> Option<(DpState, u64)> {
        let v_next = s.v_idx + action.accel as i64;
        if v_next < 0 {
            return None;
        }
        let lane_next = s.lane as i64 + action.lateral as i64;
        if lane_next < 0 || lane_next >= self.lanes as i64 {
            return None;
        }
        let lane_next = lane_next as usize;
        let lane_changes = s.lane_changes + (action.lateral != 0) as u8;
        if lane_changes > self.cfg.max_lane_changes {
            return None;
        }
        let x_next = s.x_idx + 2 * s.v_idx + action.accel as i64;

        let t = self.cfg.step;
        let a = action.accel as f64 * self.cfg.accel_step;
        let x0 = s.x_idx as f64 * self.cfg.position_increment();
        let v0 = self.speed(s.v_idx);
        let x_mid = x0 + v0 * t / 2.0 + a * t * t / 8.0;
        let v_mid = v0 + a * t / 2.0;
        let h_mid = 2 * s.k + 1;
        if self.blocked(h_mid, x_mid, v_mid, s.lane) || (lane_next != s.lane && self.blocked(h_mid, x_mid, v_mid, lane_next))
        {
            return None;
        }
        let x_end = x_next as f64 * self.cfg.position_increment();
        if self.blocked(h_mid + 1, x_end, self.speed(v_next), lane_next) {
            return None;
        }
        if lane_next == s.lane
            && (self.overtaken(h_mid - 1, [x0, x_mid], s.lane) || self.overtaken(h_mid, [x_mid, x_end], s.lane))
        {
            return None;
        }
        let next = DpState {
            k: s.k + 1,
            x_idx: x_next,
            v_idx: v_next,
            lane: lane_next,
            lane_changes,
        };
        Some((next, self.stage_cost(s.v_idx, action)))
    }

    /// Plan from a sequence of actions starting at the initial state.
    pub fn plan_from_actions(&self, actions: &[DpAction], cost_units: u64, stats: DpStats) -> DpPlan {
        let mut lane = self.initial.lane;
        let mut lane_seq = vec![lane];
        for a in actions {
            lane = (lane as i64 + a.lateral as i64) as usize;
            lane_seq.push(lane);
        }
        DpPlan {
            accel_seq: actions.iter().map(|a| a.accel as f64 * self.cfg.accel_step).collect(),
            lane_seq,
            cost: cost_units as f64 * COST_QUANTUM,
            cost_units,
            stats,
        }
    }
}

/// Constant-time-gap rectangle behind and ahead of an obstacle, never
/// shorter than the physical contact distance.
fn rectangle_contains(dx: f64, ego_v: f64, obstacle_v: f64, length_term: f64, time_gap: f64) -> bool {
    let rear = (time_gap * ego_v + 0.5 * length_term).max(length_term);
    let front = (time_gap * obstacle_v + 0.5 * length_term).max(length_term);
    dx > -rear && dx < front
}
