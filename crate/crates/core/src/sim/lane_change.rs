use super::idm::{idm_accel, idm_free, ManualDriverParams};
use super::neighbors::Neighborhood;

/// Per-vehicle driver attributes used by the car-following model.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Driver {
    pub desired_speed: f64,
    pub time_gap: f64,
}

/// IDM acceleration of `i` if it drove in `lane`, given current assignments.
pub(crate) fn accel_in_lane(n: &Neighborhood, drivers: &[Driver], i: usize, lane: usize, p: &ManualDriverParams) -> f64 {
    let s = n.state(i);
    let d = drivers[i];
    match n.leader(i, lane) {
        Some(l) => idm_accel(n.gap(i, l), s.vx, n.state(l).vx, d.desired_speed, d.time_gap, p),
        None => idm_free(s.vx, d.desired_speed, p),
    }
}

/// Target lane for manual driver `i`, if a change is both safe and worth it.
///
/// Safety requires bumper gaps of at least the jam gap to the new leader and
/// follower, counting vehicles still crossing into the target lane, and
/// that the new follower would not need to brake harder than the safe
/// deceleration. The acceleration gain must exceed the incentive
/// threshold; on a tie between both sides the left lane wins.
pub(crate) fn manual_lane_change(
    n: &Neighborhood,
    drivers: &[Driver],
    i: usize,
    lanes: usize,
    p: &ManualDriverParams,
) -> Option<usize> {
    let current = n.lanes[i];
    let a_now = accel_in_lane(n, drivers, i, current, p);
    let mut best: Option<(usize, f64)> = None;
    let candidates = [current.checked_add(1).filter(|&l| l < lanes), current.checked_sub(1)];
    for target in candidates.into_iter().flatten() {
        let leader = n.leader_occupying(i, target);
        let follower = n.follower_occupying(i, target);
        if leader.is_some_and(|l| n.gap(i, l) < p.jam_gap) {
            continue;
        }
        if let Some(f) = follower {
            if n.gap(f, i) < p.jam_gap {
                continue;
            }
            let df = drivers[f];
            let a_follower = idm_accel(n.gap(f, i), n.state(f).vx, n.state(i).vx, df.desired_speed, df.time_gap, p);
            if a_follower < -p.lane_change_safe_decel {
                continue;
            }
        }
        let gain = accel_in_lane(n, drivers, i, target, p) - a_now;
        if gain > p.lane_change_incentive && best.is_none_or(|(_, g)| gain > g) {
            best = Some((target, gain));
        }
    }
    best.map(|(lane, _)| lane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::VehicleState;

    fn setup(vehicles: &[(f64, usize, f64)]) -> (Vec<VehicleState>, Vec<f64>, Vec<usize>, Vec<Driver>) {
        let states = vehicles.iter().map(|&(x, _, v)| VehicleState::new(x, 0.0, v, 0.0, 0.0)).collect();
        let lengths = vec![4.5; vehicles.len()];
        let lanes = vehicles.iter().map(|&(_, l, _)| l).collect();
        let drivers = vec![
            Driver {
                desired_speed: 30.0,
                time_gap: 1.2
            };
            vehicles.len()
        ];
        (states, lengths, lanes, drivers)
    }

    #[test]
    fn blocked_driver_moves_to_free_lane() {
        // Ego in lane 1 behind a slow vehicle; lanes 0 and 2 free.
        let (s, l, lanes, d) = setup(&[(0.0, 1, 25.0), (30.0, 1, 10.0)]);
        let n = Neighborhood::new(&s, &l, lanes);
        let p = ManualDriverParams::default();
        assert_eq!(manual_lane_change(&n, &d, 0, 3, &p), Some(2));
    }

    #[test]
    fn close_follower_prevents_change() {
        let (s, l, lanes, d) = setup(&[(0.0, 0, 25.0), (30.0, 0, 10.0), (-8.0, 1, 30.0)]);
        let n = Neighborhood::new(&s, &l, lanes);
        let p = ManualDriverParams::default();
        assert_eq!(manual_lane_change(&n, &d, 0, 3, &p), None);
    }

    #[test]
    fn equal_conditions_keep_lane() {
        let (s, l, lanes, d) = setup(&[(0.0, 1, 25.0), (60.0, 0, 25.0), (60.0, 1, 25.0), (60.0, 2, 25.0)]);
        let n = Neighborhood::new(&s, &l, lanes);
        let p = ManualDriverParams::default();
        assert_eq!(manual_lane_change(&n, &d, 0, 3, &p), None);
    }
}
