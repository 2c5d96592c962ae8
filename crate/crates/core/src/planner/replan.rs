use serde::{Deserialize, Serialize};

use super::{Plan, PlannerParams, PredictionSource, VehicleId};
use crate::cost::RoadGeometry;
use crate::kinematics::VehicleState;

/// Reason for producing a new plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    None,
    /// The vehicle has no plan yet.
    Initial,
    HalfHorizon,
    ObstacleDeviation,
    NewObstacle,
    TrackingFailure,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::None => "none",
            Trigger::Initial => "initial",
            Trigger::HalfHorizon => "half_horizon",
            Trigger::ObstacleDeviation => "obstacle_deviation",
            Trigger::NewObstacle => "new_obstacle",
            Trigger::TrackingFailure => "tracking_failure",
        }
    }
}

/// First applicable replanning trigger for the active `plan` at `now`.
///
/// `zone` holds the ids currently inside the obstacle zone and `current`
/// looks up the present state of any vehicle still on the road.
pub fn needs_replan<F>(
    now: f64,
    plan: &Plan,
    zone: &[VehicleId],
    current: F,
    tracking_failed: bool,
    geometry: &RoadGeometry,
    params: &PlannerParams,
) -> Trigger
where
    F: Fn(VehicleId) -> Option<VehicleState>,
{
    if now >= plan.valid_until - 1e-9 {
        return Trigger::HalfHorizon;
    }
    let k = plan.step_index(now);
    let deviates = plan.predictions.iter().filter(|p| p.source != PredictionSource::Intent).any(|p| {
        let Some(actual) = current(p.id) else { return false };
        let expected = p.points[k.min(p.points.len() - 1)];
        (actual.vx - expected.vx).abs() > params.replan_speed_threshold
            || geometry.lane_of(actual.y) != geometry.lane_of(expected.y)
    });
    if deviates {
        return Trigger::ObstacleDeviation;
    }
    if zone.iter().any(|id| plan.predictions.iter().all(|p| p.id != *id)) {
        return Trigger::NewObstacle;
    }
    if tracking_failed {
        return Trigger::TrackingFailure;
    }
    Trigger::None
}
