//! Shared generators for integration and acceptance tests.
#![allow(dead_code)]

use motorway_planner::cost::{
    DrivingGoals, EllipseShape, ObstacleEllipse, ObstaclePoint, PlanningProblem, RoadGeometry, Weights,
};
use motorway_planner::dp_init::{DpModel, DpState, ACTIONS};
use motorway_planner::kinematics::{ControlBounds, ControlInput, ControlTrajectory, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const K: usize = 32;
pub const DT: f64 = 0.25;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random planning instance with `1..=5` constant-speed obstacles.
pub fn random_problem(rng: &mut ChaCha8Rng) -> PlanningProblem {
    let geometry = RoadGeometry::default();
    let lane = rng.random_range(0..3);
    let initial = VehicleState::new(
        0.0,
        geometry.lane_center(lane) + rng.random_range(-0.3..0.3),
        rng.random_range(10.0..30.0),
        rng.random_range(-0.3..0.3),
        rng.random_range(-1.0..1.0),
    );
    let time_gap = rng.random_range(0.8..1.8);
    let n = rng.random_range(1..=5);
    let obstacles = (0..n)
        .map(|_| {
            let y = geometry.lane_center(rng.random_range(0..3));
            let x0 = rng.random_range(-60.0..150.0);
            let v = rng.random_range(10.0..30.0);
            ObstacleEllipse {
                trajectory: (0..=K)
                    .map(|k| ObstaclePoint { x: x0 + v * DT * k as f64, y, vx: v })
                    .collect(),
                length_term: rng.random_range(4.0..5.0),
                time_gap,
                lateral_size: geometry.lane_width,
                shape: EllipseShape::default(),
            }
        })
        .collect();
    PlanningProblem {
        initial,
        obstacles,
        goals: DrivingGoals::cruise(rng.random_range(22.0..33.0)),
        weights: Weights::default(),
        geometry,
        bounds: ControlBounds::default(),
        horizon: K,
        dt: DT,
    }
}

pub fn random_controls(rng: &mut ChaCha8Rng, bounds: &ControlBounds) -> ControlTrajectory {
    let steps = (0..K)
        .map(|_| {
            ControlInput::new(
                rng.random_range(bounds.jx_min..bounds.jx_max),
                rng.random_range(bounds.ay_min..bounds.ay_max),
            )
        })
        .collect();
    ControlTrajectory::new(steps, DT)
}

/// Minimum cost over every action sequence, by exhaustive enumeration.
pub fn enumerate(m: &DpModel) -> Option<u64> {
    fn go(m: &DpModel, s: DpState, acc: u64, best: &mut Option<u64>) {
        if s.k == m.horizon() {
            *best = Some(best.map_or(acc, |b: u64| b.min(acc)));
            return;
        }
        for a in ACTIONS {
            if let Some((next, c)) = m.transition(&s, a) {
                go(m, next, acc + c, best);
            }
        }
    }
    let mut best = None;
    go(m, m.initial_state(), 0, &mut best);
    best
}
