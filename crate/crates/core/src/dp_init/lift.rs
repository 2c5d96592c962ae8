use super::{DpConfig, DpPlan};
use crate::cost::RoadGeometry;
use crate::kinematics::{ControlBounds, ControlInput, ControlTrajectory, VehicleState};

/// Proportional gain of the lateral correction towards the lane reference (1/s^2).
pub const LATERAL_STIFFNESS: f64 = 0.5;
/// Derivative gain of the lateral correction (1/s).
pub const LATERAL_DAMPING: f64 = 1.2;

/// Convert a coarse plan to fine `(jx, ay)` controls by forward integration.
///
/// Longitudinally, jerk drives the acceleration to the coarse target as fast
/// as the jerk bounds allow. Laterally, each lane change becomes a symmetric
/// bang-bang pulse of `lane_change_duration`, and a PD term pulls the vehicle
/// onto the resulting reference; when the ego starts on the lane centre at
/// rest laterally, the correction term is identically zero.
pub fn lift_to_continuous(
    plan: &DpPlan,
    s0: &VehicleState,
    dt: f64,
    horizon: usize,
    geometry: &RoadGeometry,
    bounds: &ControlBounds,
    cfg: &DpConfig,
) -> ControlTrajectory {
    let a_ref = lateral_reference(plan, dt, horizon, geometry, cfg);
    let coarse_steps = plan.accel_seq.len().max(1);

    let mut steps = Vec::with_capacity(horizon);
    let mut ax = s0.ax;
    let (mut y, mut vy) = (s0.y, s0.vy);
    let mut y_ref = geometry.lane_center(plan.lane_seq.first().copied().unwrap_or_else(|| geometry.lane_of(s0.y)));
    let mut vy_ref = 0.0;
    for (k, &ay_ref) in a_ref.iter().enumerate() {
        let coarse = (((k as f64 * dt) / cfg.step) + 1e-9).floor() as usize;
        let target = plan.accel_seq.get(coarse.min(coarse_steps - 1)).copied().unwrap_or(0.0);
        let jx = ((target - ax) / dt).clamp(bounds.jx_min, bounds.jx_max);
        let ay = (ay_ref + LATERAL_STIFFNESS * (y_ref - y) + LATERAL_DAMPING * (vy_ref - vy)).clamp(bounds.ay_min, bounds.ay_max);
        steps.push(ControlInput::new(jx, ay));

        ax += jx * dt;
        y += vy * dt + 0.5 * ay * dt * dt;
        vy += ay * dt;
        y_ref += vy_ref * dt + 0.5 * ay_ref * dt * dt;
        vy_ref += ay_ref * dt;
    }
    ControlTrajectory::new(steps, dt)
}

/// Feed-forward lateral acceleration: one bang-bang pulse per lane change,
/// shifted earlier when needed so that it completes inside the horizon.
fn lateral_reference(plan: &DpPlan, dt: f64, horizon: usize, geometry: &RoadGeometry, cfg: &DpConfig) -> Vec<f64> {
    let mut a_ref = vec![0.0; horizon];
    let pulse = ((cfg.lane_change_duration / dt).round() as usize).max(2);
    let half = pulse / 2;
    let duration = pulse as f64 * dt;
    let a_lat = 4.0 * geometry.lane_width / (duration * duration);
    for (m, w) in plan.lane_seq.windows(2).enumerate() {
        if w[0] == w[1] {
            continue;
        }
        let sign = if w[1] > w[0] { 1.0 } else { -1.0 };
        let start = ((m as f64 * cfg.step / dt).round() as usize).min(horizon.saturating_sub(pulse));
        for k in start..(start + pulse).min(horizon) {
            a_ref[k] += if k - start < half { sign * a_lat } else { -sign * a_lat };
        }
    }
    a_ref
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_init::DpStats;
    use crate::kinematics::rollout;

    fn plan(accel_seq: Vec<f64>, lane_seq: Vec<usize>) -> DpPlan {
        DpPlan {
            accel_seq,
            lane_seq,
            cost: 0.0,
            cost_units: 0,
            stats: DpStats::default(),
        }
    }

    #[test]
    fn idle_plan_gives_zero_controls() {
        let s0 = VehicleState::new(0.0, 4.5, 25.0, 0.0, 0.0);
        let u = lift_to_continuous(
            &plan(vec![0.0; 8], vec![1; 9]),
            &s0,
            0.25,
            32,
            &RoadGeometry::default(),
            &ControlBounds::default(),
            &DpConfig::default(),
        );
        assert_eq!(u.len(), 32);
        assert!(u.steps.iter().all(|c| *c == ControlInput::default()));
    }

    #[test]
    fn acceleration_tracking_is_jerk_limited() {
        let s0 = VehicleState::new(0.0, 1.5, 20.0, 0.0, 0.0);
        let mut accel = vec![0.0; 8];
        accel[0] = 3.0;
        let u = lift_to_continuous(
            &plan(accel, vec![0; 9]),
            &s0,
            0.25,
            32,
            &RoadGeometry::default(),
            &ControlBounds::default(),
            &DpConfig::default(),
        );
        let jx: Vec<f64> = u.steps.iter().map(|c| c.jx).collect();
        // a_x: 0 -> 1 -> 2 -> 3 (clamped jerk 4, T = 0.25), then back to 0 from k = 4.
        assert_eq!(&jx[..4], &[4.0, 4.0, 4.0, 0.0]);
        assert_eq!(&jx[4..8], &[-4.0, -4.0, -4.0, 0.0]);
    }

    #[test]
    fn lane_change_pulse_moves_one_lane() {
        let geometry = RoadGeometry::default();
        let s0 = VehicleState::new(0.0, geometry.lane_center(0), 25.0, 0.0, 0.0);
        let mut lanes = vec![0; 9];
        for l in lanes.iter_mut().skip(2) {
            *l = 1;
        }
        let u = lift_to_continuous(
            &plan(vec![0.0; 8], lanes),
            &s0,
            0.25,
            32,
            &geometry,
            &ControlBounds::default(),
            &DpConfig::default(),
        );
        let peak = u.steps.iter().map(|c| c.ay.abs()).fold(0.0, f64::max);
        assert!((peak - 4.0 / 3.0).abs() < 1e-12);
        let end = *rollout(&s0, &u).last().unwrap();
        assert!((end.y - geometry.lane_center(1)).abs() < 1e-9);
        assert!(end.vy.abs() < 1e-9);
    }

    #[test]
    fn late_lane_change_is_pulled_inside_horizon() {
        let geometry = RoadGeometry::default();
        let s0 = VehicleState::new(0.0, geometry.lane_center(1), 25.0, 0.0, 0.0);
        let mut lanes = vec![1; 9];
        lanes[8] = 0;
        let u = lift_to_continuous(
            &plan(vec![0.0; 8], lanes),
            &s0,
            0.25,
            32,
            &geometry,
            &ControlBounds::default(),
            &DpConfig::default(),
        );
        let end = *rollout(&s0, &u).last().unwrap();
        assert!((end.y - geometry.lane_center(0)).abs() < 1e-9);
        assert!(end.vy.abs() < 1e-9);
    }
}
