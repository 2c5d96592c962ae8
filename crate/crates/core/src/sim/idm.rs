use serde::{Deserialize, Serialize};

/// Car-following and lane-changing parameters shared by all manual drivers.
/// Desired speed and time headway are per vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManualDriverParams {
    pub max_accel: f64,
    pub comfortable_decel: f64,
    /// Minimum bumper-to-bumper gap at standstill (m).
    pub jam_gap: f64,
    pub exponent: f64,
    /// Deceleration applied when the gap has closed completely.
    pub emergency_decel: f64,
    /// Acceleration gain a lane change must bring (m/s^2).
    pub lane_change_incentive: f64,
    /// Largest deceleration a lane change may impose on the new follower.
    pub lane_change_safe_decel: f64,
    pub lane_change_cooldown: f64,
}

impl Default for ManualDriverParams {
    fn default() -> Self {
        Self {
            max_accel: 1.5,
            comfortable_decel: 2.0,
            jam_gap: 2.0,
            exponent: 4.0,
            emergency_decel: -9.0,
            lane_change_incentive: 0.2,
            lane_change_safe_decel: 3.0,
            lane_change_cooldown: 3.0,
        }
    }
}

impl ManualDriverParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("max_accel", self.max_accel),
            ("comfortable_decel", self.comfortable_decel),
            ("jam_gap", self.jam_gap),
            ("exponent", self.exponent),
            ("lane_change_incentive", self.lane_change_incentive),
            ("lane_change_safe_decel", self.lane_change_safe_decel),
            ("lane_change_cooldown", self.lane_change_cooldown),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.emergency_decel < 0.0) {
            return Err("emergency_decel must be negative".into());
        }
        Ok(())
    }

    fn interaction_scale(&self) -> f64 {
        2.0 * (self.max_accel * self.comfortable_decel).sqrt()
    }

    /// Desired dynamic gap `s*`.
    pub fn desired_gap(&self, v: f64, v_lead: f64, time_headway: f64) -> f64 {
        self.jam_gap + v * time_headway + v * (v - v_lead) / self.interaction_scale()
    }
}

/// Acceleration of a vehicle that is not following anyone.
pub fn idm_free(v: f64, v0: f64, p: &ManualDriverParams) -> f64 {
    p.max_accel * (1.0 - (v / v0).powf(p.exponent))
}

/// Intelligent driver model acceleration for bumper gap `gap` behind a
/// leader at `v_lead`. A closed gap yields the emergency deceleration.
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, v0: f64, time_headway: f64, p: &ManualDriverParams) -> f64 {
    if gap <= 0.0 {
        return p.emergency_decel;
    }
    let s_star = p.desired_gap(v, v_lead, time_headway).max(0.0);
    let a = p.max_accel * (1.0 - (v / v0).powf(p.exponent) - (s_star / gap).powi(2));
    a.max(p.emergency_decel)
}

/// Largest speed whose desired gap behind a leader at `v_lead` does not
/// exceed `gap`, i.e. the positive root of `s*(v) = gap`.
pub fn safe_speed(gap: f64, v_lead: f64, time_headway: f64, p: &ManualDriverParams) -> f64 {
    let c = p.jam_gap - gap;
    if c >= 0.0 {
        return 0.0;
    }
    let a = 1.0 / p.interaction_scale();
    let b = time_headway - v_lead * a;
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}
