//! Discrete-time point-mass motion model.
//!
//! Controls (longitudinal jerk, lateral acceleration) are held constant over
//! each step, so the update below is the exact integral of the continuous
//! third-order longitudinal / second-order lateral dynamics.

use serde::{Deserialize, Serialize};

/// Kinematic state of one vehicle. `y` is measured from the right road edge.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64, ax: f64) -> Self {
        Self { x, y, vx, vy, ax }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.vx.is_finite()
            && self.vy.is_finite()
            && self.ax.is_finite()
    }
}

/// Longitudinal jerk and lateral acceleration applied over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub jx: f64,
    pub ay: f64,
}

impl ControlInput {
    pub const fn new(jx: f64, ay: f64) -> Self {
        Self { jx, ay }
    }
}

/// Box constraints on the controls, constant over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub jx_min: f64,
    pub jx_max: f64,
    pub ay_min: f64,
    pub ay_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            jx_min: -4.0,
            jx_max: 4.0,
            ay_min: -1.5,
            ay_max: 1.5,
        }
    }
}

impl ControlBounds {
    pub fn contains(&self, u: &ControlInput) -> bool {
        u.jx >= self.jx_min && u.jx <= self.jx_max && u.ay >= self.ay_min && u.ay <= self.ay_max
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            jx: u.jx.clamp(self.jx_min, self.jx_max),
            ay: u.ay.clamp(self.ay_min, self.ay_max),
        }
    }
}

/// A control sequence of fixed step length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory {
    pub steps: Vec<ControlInput>,
    pub dt: f64,
}

impl ControlTrajectory {
    pub fn new(steps: Vec<ControlInput>, dt: f64) -> Self {
        debug_assert!(dt > 0.0);
        Self { steps, dt }
    }

    pub fn zeros(horizon: usize, dt: f64) -> Self {
        Self::new(vec![ControlInput::default(); horizon], dt)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn within(&self, bounds: &ControlBounds) -> bool {
        self.steps.iter().all(|u| bounds.contains(u))
    }

    /// Interleaved `[jx0, ay0, jx1, ay1, ...]` layout used by the solver.
    pub fn to_flat(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|u| [u.jx, u.ay]).collect()
    }

    pub fn from_flat(flat: &[f64], dt: f64) -> Self {
        debug_assert!(flat.len() % 2 == 0);
        let steps = flat
            .chunks_exact(2)
            .map(|c| ControlInput::new(c[0], c[1]))
            .collect();
        Self::new(steps, dt)
    }
}

/// Advance one step of length `dt` under constant controls.
pub fn step_state(s: &VehicleState, u: &ControlInput, dt: f64) -> VehicleState {
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    VehicleState {
        x: s.x + s.vx * dt + 0.5 * s.ax * dt2 + u.jx * dt3 / 6.0,
        y: s.y + s.vy * dt + 0.5 * u.ay * dt2,
        vx: s.vx + s.ax * dt + 0.5 * u.jx * dt2,
        vy: s.vy + u.ay * dt,
        ax: s.ax + u.jx * dt,
    }
}

/// State sequence of length `K + 1` starting with `s0`.
pub fn rollout(s0: &VehicleState, u: &ControlTrajectory) -> Vec<VehicleState> {
    let mut states = Vec::with_capacity(u.len() + 1);
    states.push(*s0);
    let mut s = *s0;
    for c in &u.steps {
        s = step_state(&s, c, u.dt);
        states.push(s);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn rest_stays_at_rest() {
        let s = step_state(&VehicleState::default(), &ControlInput::default(), 0.25);
        assert_eq!(s, VehicleState::default());
    }

    #[test]
    fn uniform_motion() {
        let s0 = VehicleState::new(0.0, 1.5, 10.0, 0.0, 0.0);
        let s = step_state(&s0, &ControlInput::default(), 0.25);
        assert_eq!(s, VehicleState::new(2.5, 1.5, 10.0, 0.0, 0.0));
    }

    #[test]
    fn jerk_and_lateral_step() {
        // Exact polynomial evaluation: x = 10*0.25 + 0.5*1*0.0625 + 2*0.015625/6
        let s0 = VehicleState::new(0.0, 0.0, 10.0, 0.0, 1.0);
        let s = step_state(&s0, &ControlInput::new(2.0, 0.5), 0.25);
        let x_expected = 2.5 + 0.03125 + 0.03125 / 6.0;
        assert!(close(s.x, x_expected, 1e-15));
        assert!(close(s.x, 2.536_458_333_333_333, 1e-12));
        assert!(close(s.y, 0.015625, 1e-15));
        assert!(close(s.vx, 10.3125, 1e-15));
        assert!(close(s.vy, 0.125, 1e-15));
        assert!(close(s.ax, 1.5, 1e-15));
    }

    #[test]
    fn single_step_rollout_matches_step() {
        let s0 = VehicleState::new(3.0, 4.5, 20.0, 0.1, -0.5);
        let u = ControlTrajectory::new(vec![ControlInput::new(1.0, -0.3)], 0.25);
        let traj = rollout(&s0, &u);
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[0], s0);
        assert_eq!(traj[1], step_state(&s0, &u.steps[0], 0.25));
    }

    #[test]
    fn constant_speed_for_eight_seconds() {
        let s0 = VehicleState::new(0.0, 0.0, 20.0, 0.0, 0.0);
        let traj = rollout(&s0, &ControlTrajectory::zeros(32, 0.25));
        let last = traj.last().unwrap();
        assert_eq!(traj.len(), 33);
        assert!(close(last.x, 160.0, 1e-14));
        assert_eq!((last.y, last.vx, last.vy, last.ax), (0.0, 20.0, 0.0, 0.0));
    }

    #[test]
    fn flat_layout_round_trip() {
        let u = ControlTrajectory::new(vec![ControlInput::new(1.0, 2.0), ControlInput::new(3.0, 4.0)], 0.5);
        assert_eq!(u.to_flat(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ControlTrajectory::from_flat(&u.to_flat(), 0.5), u);
    }

    #[test]
    fn bounds_clamp() {
        let b = ControlBounds::default();
        assert_eq!(b.clamp(ControlInput::new(9.0, -2.0)), ControlInput::new(4.0, -1.5));
        assert!(b.contains(&ControlInput::new(4.0, 1.5)));
        assert!(!b.contains(&ControlInput::new(4.0001, 0.0)));
    }
}
