use serde::{Deserialize, Serialize};

use super::{Plan, PlannerParams, VehicleClass, VehicleId};
use crate::cost::ObstaclePoint;
use crate::kinematics::VehicleState;

/// Another vehicle as seen by the ego at planning time.
#[derive(Debug, Clone, Copy)]
pub struct Observed<'a> {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub state: VehicleState,
    pub length: f64,
    /// Latest plan published by a connected vehicle.
    pub broadcast: Option<&'a Plan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionSource {
    Extrapolated,
    Broadcast,
    /// Extrapolation placed in the lane an obstacle is moving toward. It
    /// accompanies the regular prediction and is never checked against
    /// the obstacle's actual lane.
    Intent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub id: VehicleId,
    pub length: f64,
    /// `horizon + 1` samples, the first at planning time.
    pub points: Vec<ObstaclePoint>,
    pub source: PredictionSource,
}

/// Ids of vehicles inside the ego's obstacle zone, in the order given.
pub fn select_obstacles(ego: &VehicleState, desired_speed: f64, others: &[Observed], params: &PlannerParams) -> Vec<VehicleId> {
    let reach = desired_speed * params.horizon_time();
    let ahead = params.zone_ahead * reach;
    let behind = params.zone_behind * reach;
    others
        .iter()
        .filter(|o| {
            let dx = o.state.x - ego.x;
            dx <= ahead && dx >= -behind
        })
        .map(|o| o.id)
        .collect()
}

/// Samples `1..=steps` after `from`, braking at `decel` (<= 0) until
/// standstill and at constant speed otherwise.
fn extrapolate(from: &ObstaclePoint, decel: f64, steps: usize, dt: f64) -> impl Iterator<Item = ObstaclePoint> + '_ {
    let stop = if decel < 0.0 && from.vx > 0.0 { from.vx / -decel } else { f64::INFINITY };
    (1..=steps).map(move |j| {
        let t = dt * j as f64;
        let te = t.min(stop);
        ObstaclePoint {
            x: from.x + from.vx * te + 0.5 * decel * te * te * f64::from(stop.is_finite()),
            vx: if stop.is_finite() { (from.vx + decel * t).max(0.0) } else { from.vx },
            ..*from
        }
    })
}

fn from_state(s: &VehicleState) -> ObstaclePoint {
    ObstaclePoint { x: s.x, y: s.y, vx: s.vx }
}

/// Predicted paths of `others` over the ego horizon starting at `now`.
///
/// A connected ego uses the broadcast plans of connected obstacles, shifted
/// to its own clock and continued at the plan's terminal speed and lateral
/// position. Every other obstacle keeps its lane and its current speed, or,
/// if it is braking, keeps braking at the same rate until it stops.
pub fn predict_obstacles(
    ego_class: VehicleClass,
    others: &[Observed],
    now: f64,
    params: &PlannerParams,
) -> Vec<ObstaclePrediction> {
    let k = params.horizon;
    let dt = params.dt;
    others
        .iter()
        .map(|o| {
            let shared = match (ego_class, o.class, o.broadcast) {
                (VehicleClass::AutomatedConnected, VehicleClass::AutomatedConnected, Some(plan)) => {
                    let offset = plan.step_index(now);
                    (offset < plan.states.len()).then_some((plan, offset))
                }
                _ => None,
            };
            match shared {
                Some((plan, offset)) => {
                    let mut points: Vec<ObstaclePoint> =
                        plan.states[offset..].iter().take(k + 1).map(from_state).collect();
                    let last = *points.last().expect("offset inside the plan");
                    let missing = k + 1 - points.len();
                    points.extend(extrapolate(&last, 0.0, missing, dt));
                    ObstaclePrediction {
                        id: o.id,
                        length: o.length,
                        points,
                        source: PredictionSource::Broadcast,
                    }
                }
                None => {
                    let first = from_state(&o.state);
                    let mut points = Vec::with_capacity(k + 1);
                    points.push(first);
                    points.extend(extrapolate(&first, o.state.ax.min(0.0), k, dt));
                    ObstaclePrediction {
                        id: o.id,
                        length: o.length,
                        points,
                        source: PredictionSource::Extrapolated,
                    }
                }
            }
        })
        .collect()
}
