use motorway_planner::cost::{collision_penalty, RoadGeometry};
use motorway_planner::kinematics::{rollout, ControlTrajectory, VehicleState};
use motorway_planner::planner::{
    braking_plan, check_safety, needs_replan, obstacle_ellipses, plan, predict_obstacles, safety_override,
    select_obstacles, Ego, Observed, ObstaclePrediction, PlanKind, PlannerParams, PredictionSource, Trigger,
    VehicleClass,
};

fn geometry() -> RoadGeometry {
    RoadGeometry::default()
}

fn ego_at(lane: usize, v: f64, vd: f64, class: VehicleClass) -> Ego {
    Ego {
        id: 0,
        class,
        state: VehicleState::new(0.0, geometry().lane_center(lane), v, 0.0, 0.0),
        desired_speed: vd,
        time_gap: 1.2,
        length: 4.5,
    }
}

fn observed(id: u64, x: f64, lane: usize, v: f64, class: VehicleClass) -> Observed<'static> {
    Observed {
        id,
        class,
        state: VehicleState::new(x, geometry().lane_center(lane), v, 0.0, 0.0),
        length: 4.5,
        broadcast: None,
    }
}

#[test]
fn obstacle_zone_bounds() {
    let params = PlannerParams::default();
    let ego = VehicleState::new(1000.0, 1.5, 30.0, 0.0, 0.0);
    assert!(select_obstacles(&ego, 30.0, &[], &params).is_empty());
    let others: Vec<_> = [1240.0, 1240.001, 880.0, 879.999, 1000.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| observed(i as u64, x, 2, 10.0, VehicleClass::Manual))
        .collect();
    assert_eq!(select_obstacles(&ego, 30.0, &others, &params), vec![0, 2, 4]);
}

#[test]
fn extrapolated_prediction() {
    let params = PlannerParams::default();
    let o = observed(7, 100.0, 1, 20.0, VehicleClass::AutomatedConnected);
    let p = &predict_obstacles(VehicleClass::AutomatedNonConnected, &[o], 0.0, &params)[0];
    assert_eq!(p.source, PredictionSource::Extrapolated);
    assert_eq!(p.points.len(), 33);
    for (k, pt) in p.points.iter().enumerate() {
        assert_eq!(pt.x, 100.0 + 5.0 * k as f64);
        assert_eq!(pt.y, 4.5);
        assert_eq!(pt.vx, 20.0);
    }
}

#[test]
fn broadcast_prediction_follows_plan_then_extrapolates() {
    let params = PlannerParams::default();
    let g = geometry();
    // Connected obstacle with a slow leader ahead: its own plan changes lane.
    let obstacle_ego = Ego {
        id: 3,
        ..ego_at(0, 30.0, 30.0, VehicleClass::AutomatedConnected)
    };
    let leader = observed(4, 80.0, 0, 20.0, VehicleClass::Manual);
    let preds = predict_obstacles(VehicleClass::AutomatedConnected, &[leader], 0.0, &params);
    let broadcast = plan(&obstacle_ego, &preds, &g, &params, 0.0).unwrap();
    let last_y = broadcast.states.last().unwrap().y;
    assert_eq!(g.lane_of(last_y), 1);

    // Seen one step later, the prediction is the time-shifted plan.
    let seen = Observed {
        id: 3,
        class: VehicleClass::AutomatedConnected,
        state: broadcast.states[1],
        length: 4.5,
        broadcast: Some(&broadcast),
    };
    let p = &predict_obstacles(VehicleClass::AutomatedConnected, &[seen], 0.25, &params)[0];
    assert_eq!(p.source, PredictionSource::Broadcast);
    assert_eq!(p.points.len(), 33);
    for k in 0..32 {
        assert_eq!(p.points[k].y, broadcast.states[k + 1].y);
        assert_eq!(p.points[k].x, broadcast.states[k + 1].x);
    }
    let end = broadcast.states[32];
    assert_eq!(p.points[32].x, end.x + end.vx * 0.25);
    assert_eq!(p.points[32].y, end.y);

    // A non-connected ego ignores the broadcast.
    let p = &predict_obstacles(VehicleClass::AutomatedNonConnected, &[seen], 0.25, &params)[0];
    assert_eq!(p.source, PredictionSource::Extrapolated);
}

#[test]
fn short_broadcast_is_extended_at_terminal_speed() {
    let params = PlannerParams::default();
    let g = geometry();
    let obstacle_ego = ego_at(1, 20.0, 20.0, VehicleClass::AutomatedConnected);
    let mut short = plan(&obstacle_ego, &[], &g, &params, 0.0).unwrap();
    short.controls.steps.truncate(16);
    short.states = rollout(&obstacle_ego.state, &short.controls);
    let seen = Observed {
        id: 9,
        class: VehicleClass::AutomatedConnected,
        state: obstacle_ego.state,
        length: 4.5,
        broadcast: Some(&short),
    };
    let p = &predict_obstacles(VehicleClass::AutomatedConnected, &[seen], 0.0, &params)[0];
    let end = short.states[16];
    for k in 16..=32 {
        let j = (k - 16) as f64;
        assert!((p.points[k].x - (end.x + end.vx * 0.25 * j)).abs() < 1e-9);
        assert_eq!(p.points[k].y, end.y);
        assert_eq!(p.points[k].vx, end.vx);
    }
}

fn slow_leader_case() -> (Ego, Vec<ObstaclePrediction>) {
    let params = PlannerParams::default();
    let ego = ego_at(0, 30.0, 30.0, VehicleClass::AutomatedNonConnected);
    let leader = observed(1, 80.0, 0, 20.0, VehicleClass::Manual);
    (ego, predict_obstacles(ego.class, &[leader], 0.0, &params))
}

#[test]
fn slow_leader_plan_changes_lane() {
    let params = PlannerParams::default();
    let g = geometry();
    let (ego, preds) = slow_leader_case();
    let p = plan(&ego, &preds, &g, &params, 0.0).unwrap();
    assert_eq!(p.kind, PlanKind::Normal);
    let end = p.states.last().unwrap();
    assert_eq!(g.lane_of(end.y), 1);

    // Following in lane instead, with lateral motion frozen.
    let mut in_lane = params;
    in_lane.dp.max_lane_changes = 0;
    let q = plan(&ego, &preds, &g, &in_lane, 0.0).unwrap();
    assert_eq!(g.lane_of(q.states.last().unwrap().y), 0);
    assert!((end.vx - 30.0).abs() < (q.states.last().unwrap().vx - 30.0).abs());
    assert!(p.cost < q.cost);
}

#[test]
fn safety_check_examples() {
    let params = PlannerParams::default();
    let g = geometry();
    let ego = ego_at(1, 20.0, 20.0, VehicleClass::AutomatedNonConnected);
    let cruise = rollout(&ego.state, &ControlTrajectory::zeros(32, 0.25));
    assert!(check_safety(&ego.state, &cruise, &[], &g, 0.5));

    // An obstacle moving along the same path, 400 m ahead: safe.
    let far = observed(1, 400.0, 1, 20.0, VehicleClass::Manual);
    let preds = predict_obstacles(ego.class, &[far], 0.0, &params);
    let obs = obstacle_ellipses(&ego, &preds, &g, &params, 32);
    assert!(check_safety(&ego.state, &cruise, &obs, &g, 0.5));

    // A stationary obstacle that the cruising ego drives through: unsafe.
    let wall = observed(2, 80.0, 1, 0.0, VehicleClass::Manual);
    let preds = predict_obstacles(ego.class, &[wall], 0.0, &params);
    let obs = obstacle_ellipses(&ego, &preds, &g, &params, 32);
    assert!(!check_safety(&ego.state, &cruise, &obs, &g, 0.5));

    // Grazing the ellipse edge at c = 0.4, without footprint overlap: safe.
    // Same speeds, so the ellipse is centred on the obstacle with half length
    // 0.5 * (2 * 1.2 * 20 + 4.5) = 26.25 m; solve ((dx)/26.25)^18 = 1.5.
    let dx = 26.25 * 1.5f64.powf(1.0 / 18.0);
    let graze = observed(3, dx, 1, 20.0, VehicleClass::Manual);
    let preds = predict_obstacles(ego.class, &[graze], 0.0, &params);
    let obs = obstacle_ellipses(&ego, &preds, &g, &params, 32);
    let c = collision_penalty(cruise[5].x, cruise[5].y, 20.0, &obs[0], 5);
    assert!((c - 0.4).abs() < 1e-9);
    assert!(check_safety(&ego.state, &cruise, &obs, &g, 0.5));
}

#[test]
fn override_tracks_leader_speed_with_half_horizon() {
    let params = PlannerParams::default();
    let g = geometry();
    // Boxed in: leader at 20 m/s, both adjacent lanes occupied alongside.
    let ego = ego_at(1, 22.0, 30.0, VehicleClass::AutomatedNonConnected);
    let others = [
        observed(1, 35.0, 1, 20.0, VehicleClass::Manual),
        observed(2, 0.0, 0, 22.0, VehicleClass::Manual),
        observed(3, 0.0, 2, 22.0, VehicleClass::Manual),
    ];
    let preds = predict_obstacles(ego.class, &others, 0.0, &params);
    let p = safety_override(&ego, &preds, &g, &params, 5.0).unwrap();
    assert_eq!(p.kind, PlanKind::Override);
    assert!(p.safety_mode());
    assert_eq!(p.horizon(), 16);
    assert_eq!(p.desired_speed, 19.0);
    assert_eq!(p.valid_until, 7.0);
}

#[test]
fn stationary_leader_override_stops_short() {
    let params = PlannerParams::default();
    let g = geometry();
    let ego = ego_at(1, 10.0, 30.0, VehicleClass::AutomatedNonConnected);
    let others = [observed(1, 40.0, 1, 0.0, VehicleClass::Manual)];
    let preds = predict_obstacles(ego.class, &others, 0.0, &params);
    let p = safety_override(&ego, &preds, &g, &params, 0.0).unwrap();
    assert_eq!(p.desired_speed, 0.0);
    assert!(p.states.iter().all(|s| 40.0 - s.x >= 4.5));
    assert!(p.states.last().unwrap().vx < 10.0);
}

#[test]
fn override_without_leader_keeps_lane() {
    let params = PlannerParams::default();
    let g = geometry();
    let ego = ego_at(1, 25.0, 25.0, VehicleClass::AutomatedNonConnected);
    let others = [observed(1, -10.0, 0, 25.0, VehicleClass::Manual)];
    let preds = predict_obstacles(ego.class, &others, 0.0, &params);
    let p = safety_override(&ego, &preds, &g, &params, 0.0).unwrap();
    assert!(p.controls.steps.iter().all(|c| c.ay == 0.0));
    assert_eq!(p.desired_speed, 25.0);
}

#[test]
fn replan_triggers() {
    let params = PlannerParams::default();
    let g = geometry();
    let ego = ego_at(1, 20.0, 20.0, VehicleClass::AutomatedNonConnected);
    let leader = observed(1, 60.0, 1, 20.0, VehicleClass::Manual);
    let preds = predict_obstacles(ego.class, &[leader], 0.0, &params);
    let p = plan(&ego, &preds, &g, &params, 0.0).unwrap();
    let at = |t: f64, v: f64, lane: usize| {
        move |id: u64| (id == 1).then(|| VehicleState::new(60.0 + 20.0 * t, g.lane_center(lane), v, 0.0, 0.0))
    };
    assert_eq!(needs_replan(1.0, &p, &[1], at(1.0, 20.0, 1), false, &g, &params), Trigger::None);
    assert_eq!(needs_replan(4.0, &p, &[1], at(4.0, 20.0, 1), false, &g, &params), Trigger::HalfHorizon);
    assert_eq!(
        needs_replan(1.0, &p, &[1], at(1.0, 18.5, 1), false, &g, &params),
        Trigger::ObstacleDeviation
    );
    assert_eq!(
        needs_replan(1.0, &p, &[1], at(1.0, 20.0, 2), false, &g, &params),
        Trigger::ObstacleDeviation
    );
    assert_eq!(needs_replan(1.0, &p, &[1, 5], at(1.0, 20.0, 1), false, &g, &params), Trigger::NewObstacle);
    assert_eq!(needs_replan(1.0, &p, &[1], at(1.0, 20.0, 1), true, &g, &params), Trigger::TrackingFailure);
    // Vehicles that left the road are ignored.
    assert_eq!(needs_replan(1.0, &p, &[], |_| None, false, &g, &params), Trigger::None);
}

#[test]
fn connected_and_plain_egos_agree_without_automated_obstacles() {
    let params = PlannerParams::default();
    let g = geometry();
    let others = [
        observed(1, 50.0, 1, 18.0, VehicleClass::Manual),
        observed(2, -20.0, 2, 26.0, VehicleClass::Manual),
    ];
    let a = ego_at(1, 24.0, 28.0, VehicleClass::AutomatedNonConnected);
    let b = Ego {
        class: VehicleClass::AutomatedConnected,
        ..a
    };
    let pa = plan(&a, &predict_obstacles(a.class, &others, 0.0, &params), &g, &params, 0.0).unwrap();
    let pb = plan(&b, &predict_obstacles(b.class, &others, 0.0, &params), &g, &params, 0.0).unwrap();
    assert_eq!(pa.controls, pb.controls);
    assert_eq!(pa.cost, pb.cost);
}

#[test]
fn braking_fallback_respects_bounds() {
    let params = PlannerParams::default();
    let g = geometry();
    let ego = ego_at(2, 30.0, 30.0, VehicleClass::AutomatedConnected);
    let p = braking_plan(&ego, &[], &g, &params, 3.0);
    assert_eq!(p.kind, PlanKind::Braking);
    assert!(p.controls.within(&params.bounds));
    assert_eq!(p.states, rollout(&ego.state, &p.controls));
}
