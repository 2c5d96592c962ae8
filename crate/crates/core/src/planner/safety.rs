use super::ObstaclePrediction;
use crate::cost::{collision_penalty, ellipse_level, ObstacleEllipse, RoadGeometry};
use crate::kinematics::VehicleState;

/// A planned trajectory is unsafe when a future state enters the core of an
/// obstacle's ellipse (penalty above `threshold`) or the lane-mapped
/// vehicle footprints overlap.
///
/// Ellipse intrusions count only where the ego is responsible for the gap:
/// the obstacle is ahead, or the ego has left its starting lane. A follower
/// closing in from behind is left to the follower.
///
/// Obstacles ahead whose ellipse already contains the ego at planning time
/// cannot be left within one step. For them the plan may stay inside, but
/// never deeper than it started. The terminal state carries no cost in the
/// objective and is only checked for footprint overlap.
pub fn check_safety(
    initial: &VehicleState,
    states: &[VehicleState],
    obstacles: &[ObstacleEllipse],
    geometry: &RoadGeometry,
    threshold: f64,
) -> bool {
    let start_lane = geometry.lane_of(initial.y);
    obstacles.iter().all(|o| {
        let steps = states.len().min(o.trajectory.len());
        let overlap_free = (1..steps).all(|k| {
            let (s, p) = (&states[k], o.trajectory[k]);
            !(geometry.lane_of(s.y) == geometry.lane_of(p.y) && (s.x - p.x).abs() < o.length_term)
        });
        if !overlap_free {
            return false;
        }
        let responsible = |k: usize| o.trajectory[k].x >= states[k].x || geometry.lane_of(states[k].y) != start_lane;
        let last = steps.saturating_sub(2);
        let inside = collision_penalty(initial.x, initial.y, initial.vx, o, 0) > threshold;
        let start_level = ellipse_level(initial.x, initial.y, initial.vx, o, 0);
        (1..=last).all(|k| {
            let s = &states[k];
            !responsible(k)
                || collision_penalty(s.x, s.y, s.vx, o, k) <= threshold
                || (inside && ellipse_level(s.x, s.y, s.vx, o, k) >= start_level)
        })
    })
}

/// Nearest obstacle ahead of the ego in its current lane.
pub fn find_leader<'a>(
    ego: &VehicleState,
    predictions: &'a [ObstaclePrediction],
    geometry: &RoadGeometry,
) -> Option<&'a ObstaclePrediction> {
    let lane = geometry.lane_of(ego.y);
    predictions
        .iter()
        .filter(|p| {
            let first = p.points[0];
            geometry.lane_of(first.y) == lane && first.x > ego.x
        })
        .min_by(|a, b| a.points[0].x.total_cmp(&b.points[0].x))
}
