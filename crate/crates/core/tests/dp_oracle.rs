mod common;

use common::{enumerate, random_problem, rng, DT, K};
use motorway_planner::cost::{DrivingGoals, EllipseShape, ObstacleEllipse, ObstaclePoint, PlanningProblem, RoadGeometry};
use motorway_planner::dp_init::{
    lift_to_continuous, solve_backward, DpAction, DpConfig, DpError, DpModel, DpWeights,
};
use motorway_planner::kinematics::{rollout, ControlBounds, VehicleState};

fn model(p: &PlanningProblem, cfg: &DpConfig) -> DpModel {
    DpModel::new(&p.initial, &p.obstacles, p.dt, &p.goals, &p.geometry, cfg)
}

/// Re-simulate a plan through the model and return its cost.
fn replay(m: &DpModel, accel: &[f64], lanes: &[usize]) -> u64 {
    let step = m.config().accel_step;
    let mut s = m.initial_state();
    let mut total = 0;
    for (k, a) in accel.iter().enumerate() {
        let action = DpAction {
            accel: (a / step).round() as i8,
            lateral: (lanes[k + 1] as i8) - (lanes[k] as i8),
        };
        let (next, c) = m.transition(&s, action).expect("plan transition is feasible");
        assert!(next.v_idx >= 0);
        total += c;
        s = next;
    }
    total
}

fn obstacle(x0: f64, lane: usize, v: f64, geometry: &RoadGeometry) -> ObstacleEllipse {
    ObstacleEllipse {
        trajectory: (0..=K)
            .map(|k| ObstaclePoint {
                x: x0 + v * DT * k as f64,
                y: geometry.lane_center(lane),
                vx: v,
            })
            .collect(),
        length_term: 4.5,
        time_gap: 1.2,
        lateral_size: geometry.lane_width,
        shape: EllipseShape::default(),
    }
}

#[test]
fn backward_matches_exhaustive_enumeration() {
    let cfg = DpConfig {
        horizon: 5,
        ..DpConfig::default()
    };
    let mut r = rng(11);
    let mut infeasible = 0;
    for _ in 0..40 {
        let p = random_problem(&mut r);
        let m = model(&p, &cfg);
        match (m.solve_backward(), enumerate(&m)) {
            (Ok(plan), Some(best)) => {
                assert_eq!(plan.cost_units, best);
                assert_eq!(replay(&m, &plan.accel_seq, &plan.lane_seq), best);
            }
            (Err(DpError::NoFeasiblePlan), None) => infeasible += 1,
            (a, b) => panic!("solver {a:?} disagrees with enumeration {b:?}"),
        }
    }
    assert!(infeasible < 40);
}

#[test]
fn forward_search_matches_backward_on_random_instances() {
    let cfg = DpConfig::default();
    let mut r = rng(12);
    let mut compared = 0;
    for _ in 0..100 {
        let p = random_problem(&mut r);
        let m = model(&p, &cfg);
        match (m.solve_backward(), m.solve_forward_bnb()) {
            (Ok(b), Ok(f)) => {
                assert_eq!(b.cost_units, f.cost_units);
                assert!((b.cost - f.cost).abs() <= 1e-9);
                assert!(f.stats.expanded < b.stats.expanded, "{:?} vs {:?}", f.stats, b.stats);
                assert_eq!(replay(&m, &f.accel_seq, &f.lane_seq), f.cost_units);
                for plan in [&b, &f] {
                    assert!(plan.lane_changes() <= 1);
                    assert_eq!(plan.accel_seq.len(), cfg.horizon);
                    assert_eq!(plan.lane_seq.len(), cfg.horizon + 1);
                }
                compared += 1;
            }
            (Err(_), Err(_)) => {}
            (a, b) => panic!("backward {a:?} vs forward {b:?}"),
        }
    }
    assert!(compared >= 90, "only {compared} feasible instances");
}

#[test]
fn free_road_at_desired_speed_is_idle() {
    let geometry = RoadGeometry::default();
    let s0 = VehicleState::new(0.0, geometry.lane_center(1), 27.0, 0.0, 0.0);
    let cfg = DpConfig::default();
    let goals = DrivingGoals::cruise(27.0);
    let b = solve_backward(&s0, &[], DT, &goals, &geometry, &cfg).unwrap();
    let f = DpModel::new(&s0, &[], DT, &goals, &geometry, &cfg).solve_forward_bnb().unwrap();
    for plan in [b, f] {
        assert_eq!(plan.cost_units, 0);
        assert!(plan.accel_seq.iter().all(|&a| a == 0.0));
        assert!(plan.lane_seq.iter().all(|&l| l == 1));
    }
}

#[test]
fn one_increment_below_desired_speed() {
    let geometry = RoadGeometry::default();
    let s0 = VehicleState::new(0.0, geometry.lane_center(0), 24.0, 0.0, 0.0);
    let goals = DrivingGoals::cruise(27.0);

    // Equal weights: catching up immediately (9 + 9) beats any delay.
    let equal = DpConfig {
        weights: DpWeights {
            accel: 1.0,
            lane_change: 1.0,
            speed: 1.0,
        },
        ..DpConfig::default()
    };
    let plan = solve_backward(&s0, &[], DT, &goals, &geometry, &equal).unwrap();
    let mut expected = vec![0.0; 8];
    expected[0] = 3.0;
    assert_eq!(plan.accel_seq, expected);
    assert!((plan.cost - 18.0).abs() < 1e-9);
    let m = DpModel::new(&s0, &[], DT, &goals, &geometry, &equal);
    assert_eq!(enumerate(&m), Some(plan.cost_units));

    // Default weights: eight seconds at 3 m/s below target (8 * 0.45) cost
    // less than one acceleration step (9), so the plan holds speed.
    let default = DpConfig::default();
    let plan = solve_backward(&s0, &[], DT, &goals, &geometry, &default).unwrap();
    assert!(plan.accel_seq.iter().all(|&a| a == 0.0));
    assert!((plan.cost - 3.6).abs() < 1e-9);
    let m = DpModel::new(&s0, &[], DT, &goals, &geometry, &default);
    assert_eq!(enumerate(&m), Some(plan.cost_units));
}

#[test]
fn slow_leader_triggers_a_lane_change() {
    let geometry = RoadGeometry::default();
    let s0 = VehicleState::new(0.0, geometry.lane_center(0), 30.0, 0.0, 0.0);
    let leader = obstacle(60.0, 0, 18.0, &geometry);
    let goals = DrivingGoals::cruise(30.0);
    let cfg = DpConfig::default();
    let plan = solve_backward(&s0, std::slice::from_ref(&leader), DT, &goals, &geometry, &cfg).unwrap();
    assert_eq!(plan.lane_changes(), 1);
    assert_eq!(*plan.lane_seq.last().unwrap(), 1);
    let f = DpModel::new(&s0, &[leader], DT, &goals, &geometry, &cfg).solve_forward_bnb().unwrap();
    assert_eq!(f.cost_units, plan.cost_units);
}

#[test]
fn boxed_in_vehicle_has_no_feasible_plan() {
    let geometry = RoadGeometry::default();
    let s0 = VehicleState::new(0.0, geometry.lane_center(1), 30.0, 0.0, 0.0);
    // Stationary wall across all lanes just ahead of the ego.
    let walls: Vec<_> = (0..3).map(|lane| obstacle(20.0, lane, 0.0, &geometry)).collect();
    let goals = DrivingGoals::cruise(30.0);
    let cfg = DpConfig::default();
    assert_eq!(solve_backward(&s0, &walls, DT, &goals, &geometry, &cfg), Err(DpError::NoFeasiblePlan));
    let m = DpModel::new(&s0, &walls, DT, &goals, &geometry, &cfg);
    assert_eq!(m.solve_forward_bnb(), Err(DpError::NoFeasiblePlan));
}

#[test]
fn lifted_plans_are_admissible() {
    let cfg = DpConfig::default();
    let bounds = ControlBounds::default();
    let mut r = rng(13);
    for _ in 0..100 {
        let mut p = random_problem(&mut r);
        let lane = p.geometry.lane_of(p.initial.y);
        p.initial.y = p.geometry.lane_center(lane);
        p.initial.vy = 0.0;
        let Ok(plan) = model(&p, &cfg).solve_forward_bnb() else { continue };
        let u = lift_to_continuous(&plan, &p.initial, DT, K, &p.geometry, &bounds, &cfg);
        assert_eq!(u.len(), K);
        assert!(u.within(&bounds));
        let states = rollout(&p.initial, &u);
        for s in &states {
            assert!(s.y > 0.0 && s.y < p.geometry.width(), "left the road: {s:?}");
        }
        let end = states.last().unwrap();
        assert!((end.y - p.geometry.lane_center(*plan.lane_seq.last().unwrap())).abs() < 1e-9);
        assert!(end.vy.abs() < 1e-9);
    }
}
