//! Discrete-time multi-lane motorway simulator.
//!
//! Each step of length `dt`:
//! 1. automated vehicles whose replanning trigger fires compute new plans
//!    from a snapshot of the world (in parallel; results applied by id);
//! 2. automated vehicles apply the current control of their plan;
//! 3. manual drivers decide lane changes (sequentially by id) and follow
//!    the intelligent driver model;
//! 4. vehicles past the section end leave, queued arrivals enter at `x = 0`;
//! 5. the new state is audited for overlaps, road departures and negative
//!    speeds.
//!
//! Given a seed and configuration, every run is bit-for-bit reproducible.

mod idm;
mod lane_change;
mod neighbors;

pub use idm::{idm_accel, idm_free, safe_speed, ManualDriverParams};

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{ObstaclePoint, RoadGeometry};
use crate::kinematics::{step_state, ControlInput, VehicleState};
use crate::planner::{
    braking_plan, needs_replan, plan, predict_obstacles, Ego, ObstaclePrediction, Observed, Plan, PlannerParams,
    PredictionSource, Trigger, VehicleClass, VehicleId,
};
use crate::trace::{AuditEvent, AuditKind, PlanRecord, StepRow, TimingRecord, VehicleInfo};
use lane_change::{manual_lane_change, Driver};
use neighbors::Neighborhood;

const NEGATIVE_SPEED_TOLERANCE: f64 = 0.01;

/// Lateral speed above which an observed vehicle is taken to be changing
/// lane (m/s).
const INTENT_LATERAL_SPEED: f64 = 0.5;

/// Half the vehicle width used for lane occupancy (m).
const HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnConfig {
    /// Arrival rate (veh/h).
    pub inflow: f64,
    /// Share of automated vehicles.
    pub penetration: f64,
    pub connected: bool,
    pub desired_speed_kmh: [f64; 2],
    pub time_gap: [f64; 2],
    pub length: [f64; 2],
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            inflow: 3000.0,
            penetration: 0.5,
            connected: true,
            desired_speed_kmh: [80.0, 120.0],
            time_gap: [0.8, 1.8],
            length: [4.0, 5.0],
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.inflow >= 0.0 && self.inflow.is_finite()) {
            return Err("inflow must be a non-negative number".into());
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err("penetration must be in [0, 1]".into());
        }
        for (name, [lo, hi]) in [
            ("desired_speed_kmh", self.desired_speed_kmh),
            ("time_gap", self.time_gap),
            ("length", self.length),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(format!("{name} must be an increasing pair of positive numbers"));
            }
        }
        Ok(())
    }

    pub fn automated_class(&self) -> VehicleClass {
        if self.connected {
            VehicleClass::AutomatedConnected
        } else {
            VehicleClass::AutomatedNonConnected
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub geometry: RoadGeometry,
    pub section_length: f64,
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    pub seed: u64,
    pub spawn: SpawnConfig,
    pub manual: ManualDriverParams,
    pub planner: PlannerParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geometry: RoadGeometry::default(),
            section_length: 3000.0,
            dt: 0.25,
            duration: 3600.0,
            seed: 1,
            spawn: SpawnConfig::default(),
            manual: ManualDriverParams::default(),
            planner: PlannerParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.geometry.validate().map_err(|e| format!("geometry.{e}"))?;
        if !(self.section_length > 0.0) {
            return Err("section_length must be positive".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err("duration must be a non-negative number".into());
        }
        self.spawn.validate().map_err(|e| format!("spawn.{e}"))?;
        self.manual.validate().map_err(|e| format!("manual.{e}"))?;
        self.planner.validate().map_err(|e| format!("planner.{e}"))?;
        if (self.planner.dt - self.dt).abs() > 1e-12 {
            return Err("planner.dt must equal dt".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}

/// A vehicle on the road.
#[derive(Debug, Clone)]
pub struct Vehicle {
    pub info: VehicleInfo,
    pub state: VehicleState,
    pub plan: Option<Arc<Plan>>,
    pub plan_id: Option<u64>,
    /// Controls applied over the last step.
    pub control: ControlInput,
    pub last_lane_change: f64,
    pub tracking_failed: bool,
}

impl Vehicle {
    fn ego(&self) -> Ego {
        Ego {
            id: self.info.id,
            class: self.info.class,
            state: self.state,
            desired_speed: self.info.desired_speed,
            time_gap: self.info.time_gap,
            length: self.info.length,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    class: VehicleClass,
    desired_speed: f64,
    time_gap: f64,
    length: f64,
    lane_draw: f64,
}

/// Everything produced by one simulation step.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub t: f64,
    pub rows: Vec<StepRow>,
    pub entered: Vec<VehicleInfo>,
    pub plans: Vec<PlanRecord>,
    pub timings: Vec<TimingRecord>,
    pub audit: Vec<AuditEvent>,
}

pub struct World {
    cfg: SimConfig,
    step: u64,
    /// Sorted by id.
    vehicles: Vec<Vehicle>,
    queue: VecDeque<Arrival>,
    rng: ChaCha8Rng,
    arrivals: Option<Poisson<f64>>,
    next_id: VehicleId,
    next_plan_id: u64,
    entered: usize,
    exited: usize,
}

struct PlanJob {
    index: usize,
    trigger: Trigger,
    zone: Vec<usize>,
}

impl World {
    pub fn new(cfg: SimConfig) -> Result<Self, String> {
        cfg.validate()?;
        let rate = cfg.spawn.inflow / 3600.0 * cfg.dt;
        let arrivals = (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            step: 0,
            vehicles: Vec::new(),
            queue: VecDeque::new(),
            arrivals,
            next_id: 0,
            next_plan_id: 0,
            entered: 0,
            exited: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.index_of(id).map(|i| &self.vehicles[i])
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn entered(&self) -> usize {
        self.entered
    }

    pub fn exited(&self) -> usize {
        self.exited
    }

    fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.info.id).ok()
    }

    /// Place a vehicle directly on the road, bypassing the arrival process.
    pub fn insert(&mut self, class: VehicleClass, state: VehicleState, desired_speed: f64, time_gap: f64, length: f64) -> VehicleInfo {
        let info = VehicleInfo {
            id: self.next_id,
            class,
            length,
            time_gap,
            desired_speed,
            entered_at: self.time(),
        };
        self.next_id += 1;
        self.entered += 1;
        self.vehicles.push(Vehicle {
            info,
            state,
            plan: None,
            plan_id: None,
            control: ControlInput::default(),
            last_lane_change: f64::NEG_INFINITY,
            tracking_failed: false,
        });
        info
    }

    fn lengths(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.info.length).collect()
    }

    fn lanes(&self, states: &[VehicleState]) -> Vec<usize> {
        states.iter().map(|s| self.cfg.geometry.lane_of(s.y)).collect()
    }

    pub fn step(&mut self) -> StepOutput {
        let now = self.time();
        let dt = self.cfg.dt;
        let mut out = StepOutput {
            t: now + dt,
            ..StepOutput::default()
        };
        let snapshot: Vec<VehicleState> = self.vehicles.iter().map(|v| v.state).collect();
        let lengths = self.lengths();

        self.replan(now, &snapshot, &lengths, &mut out);
        let mut next = snapshot.clone();
        self.move_automated(now, &snapshot, &lengths, &mut next, &mut out);
        self.move_manual(now, &snapshot, &lengths, &mut next, &mut out);
        for (v, s) in self.vehicles.iter_mut().zip(&next) {
            v.state = *s;
        }

        self.step += 1;
        let t = self.time();
        let rows_before = self.vehicles.len();
        for v in &self.vehicles {
            out.rows.push(self.row(t, v));
        }
        let length = self.cfg.section_length;
        self.vehicles.retain(|v| v.state.x < length);
        self.exited += rows_before - self.vehicles.len();

        self.spawn(t, &mut out);
        self.audit(t, &mut out);
        debug_assert_eq!(self.entered, self.vehicles.len() + self.exited);
        out
    }

    fn row(&self, t: f64, v: &Vehicle) -> StepRow {
        StepRow {
            t,
            id: v.info.id,
            class: v.info.class,
            x: v.state.x,
            y: v.state.y,
            lane: self.cfg.geometry.lane_of(v.state.y),
            vx: v.state.vx,
            vy: v.state.vy,
            ax: v.state.ax,
            jx: v.control.jx,
            ay: v.control.ay,
            plan_id: v.plan_id,
        }
    }

    fn replan(&mut self, now: f64, snapshot: &[VehicleState], lengths: &[f64], out: &mut StepOutput) {
        let params = &self.cfg.planner;
        let geometry = &self.cfg.geometry;
        let n = Neighborhood::new(snapshot, lengths, self.lanes(snapshot));
        let reach = params.horizon_time();
        let mut jobs = Vec::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            if !v.info.class.is_automated() {
                continue;
            }
            let x = snapshot[i].x;
            let reach = v.info.desired_speed * reach;
            let zone: Vec<usize> = n
                .within(x - params.zone_behind * reach, x + params.zone_ahead * reach)
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect();
            let trigger = match &v.plan {
                None => Trigger::Initial,
                Some(p) => {
                    let ids: Vec<VehicleId> = zone.iter().map(|&j| self.vehicles[j].info.id).collect();
                    let lookup = |id| self.index_of(id).map(|j| snapshot[j]);
                    needs_replan(now, p, &ids, lookup, v.tracking_failed, geometry, params)
                }
            };
            if trigger != Trigger::None {
                jobs.push(PlanJob { index: i, trigger, zone });
            }
        }

        let vehicles = &self.vehicles;
        let plans: Vec<Plan> = jobs
            .par_iter()
            .map(|job| {
                let ego = vehicles[job.index].ego();
                let observed: Vec<Observed> = job
                    .zone
                    .iter()
                    .map(|&j| {
                        let o = &vehicles[j];
                        Observed {
                            id: o.info.id,
                            class: o.info.class,
                            state: o.state,
                            length: o.info.length,
                            broadcast: o.plan.as_deref(),
                        }
                    })
                    .collect();
                let mut predictions = predict_obstacles(ego.class, &observed, now, params);
                // A vehicle drifting sideways without a shared plan is also
                // expected in the lane it is heading for.
                let intents: Vec<ObstaclePrediction> = predictions
                    .iter()
                    .zip(&observed)
                    .filter(|(p, o)| p.source == PredictionSource::Extrapolated && o.state.vy.abs() > INTENT_LATERAL_SPEED)
                    .filter_map(|(p, o)| {
                        let lane = geometry.lane_of(o.state.y);
                        let target = if o.state.vy > 0.0 { lane + 1 } else { lane.checked_sub(1)? };
                        (target < geometry.lanes).then(|| {
                            let y = geometry.lane_center(target);
                            ObstaclePrediction {
                                points: p.points.iter().map(|q| ObstaclePoint { y, ..*q }).collect(),
                                source: PredictionSource::Intent,
                                ..p.clone()
                            }
                        })
                    })
                    .collect();
                predictions.extend(intents);
                // Surrounding vehicles are perceived at lane level.
                for q in predictions.iter_mut().flat_map(|p| p.points.iter_mut()) {
                    q.y = geometry.lane_center(geometry.lane_of(q.y));
                }
                plan(&ego, &predictions, geometry, params, now)
                    .unwrap_or_else(|_| braking_plan(&ego, &predictions, geometry, params, now))
            })
            .collect();

        for (job, p) in jobs.into_iter().zip(plans) {
            let plan_id = self.next_plan_id;
            self.next_plan_id += 1;
            let v = &mut self.vehicles[job.index];
            let d = &p.diagnostics;
            out.plans.push(PlanRecord {
                t: now,
                vehicle: v.info.id,
                plan_id,
                trigger: job.trigger,
                kind: p.kind,
                horizon: p.horizon(),
                desired_speed: p.desired_speed,
                dp_cost: d.dp_cost,
                fda_cost: d.fda_cost,
                iterations: d.iterations,
                converged: d.converged,
            });
            out.timings.push(TimingRecord {
                plan_id,
                vehicle: v.info.id,
                dp_backward_us: d.timings.dp_backward_us,
                dp_bnb_us: d.timings.dp_bnb_us,
                fda_us: d.timings.fda_us,
                total_us: d.timings.total_us,
            });
            v.plan = Some(Arc::new(p));
            v.plan_id = Some(plan_id);
            v.tracking_failed = false;
        }
    }

    fn move_automated(
        &mut self,
        now: f64,
        snapshot: &[VehicleState],
        lengths: &[f64],
        next: &mut [VehicleState],
        out: &mut StepOutput,
    ) {
        let g = self.cfg.geometry;
        let dt = self.cfg.dt;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if !v.info.class.is_automated() {
                continue;
            }
            let u = v.plan.as_ref().and_then(|p| p.control_at(now)).unwrap_or_default();
            let old = snapshot[i];
            let mut new = step_state(&old, &u, dt);
            let to = g.lane_of(new.y);
            if g.lane_of(old.y) != to {
                // The low-level controller refuses to enter a lane where the
                // end-of-step bumper gap to anyone there is below the jam gap.
                let blocked = (0..snapshot.len()).find(|&j| {
                    if j == i {
                        return false;
                    }
                    // Vehicles already moved this step are seen at their new state.
                    let other = if j < i && self.vehicles[j].info.class.is_automated() {
                        next[j]
                    } else {
                        VehicleState {
                            x: snapshot[j].x + snapshot[j].vx * dt,
                            ..snapshot[j]
                        }
                    };
                    if g.lane_of(other.y) != to && g.lane_of(snapshot[j].y) != to {
                        return false;
                    }
                    (other.x - new.x).abs() - 0.5 * (lengths[i] + lengths[j]) < self.cfg.manual.jam_gap
                });
                if let Some(j) = blocked {
                    new.y = old.y;
                    new.vy = 0.0;
                    let v = &mut self.vehicles[i];
                    v.tracking_failed = true;
                    out.audit.push(AuditEvent {
                        t: now + dt,
                        kind: AuditKind::RejectedLaneChange,
                        vehicle: v.info.id,
                        other: Some(self.vehicles[j].info.id),
                        value: to as f64,
                    });
                }
            }
            next[i] = new;
            self.vehicles[i].control = u;
        }
    }

    fn move_manual(
        &mut self,
        now: f64,
        snapshot: &[VehicleState],
        lengths: &[f64],
        next: &mut [VehicleState],
        out: &mut StepOutput,
    ) {
        let p = self.cfg.manual;
        let g = self.cfg.geometry;
        let dt = self.cfg.dt;
        let drivers: Vec<Driver> = self
            .vehicles
            .iter()
            .map(|v| Driver {
                desired_speed: v.info.desired_speed,
                time_gap: v.info.time_gap,
            })
            .collect();
        let mut n = Neighborhood::new(snapshot, lengths, self.lanes(snapshot));
        // A vehicle whose footprint crosses a lane boundary blocks lane changes
        // into either lane.
        for (slot, s) in n.straddles.iter_mut().zip(snapshot) {
            let lane = g.lane_of(s.y);
            *slot = [s.y - HALF_WIDTH, s.y + HALF_WIDTH]
                .into_iter()
                .filter(|y| (0.0..g.width()).contains(y))
                .map(|y| g.lane_of(y))
                .find(|&l| l != lane);
        }

        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.info.class.is_automated() || now - v.last_lane_change < p.lane_change_cooldown {
                continue;
            }
            if let Some(target) = manual_lane_change(&n, &drivers, i, g.lanes, &p) {
                n.lanes[i] = target;
                n.straddles[i] = None;
                self.vehicles[i].last_lane_change = now;
            }
        }

        for i in 0..self.vehicles.len() {
            if self.vehicles[i].info.class.is_automated() {
                continue;
            }
            let s = snapshot[i];
            let lane = n.lanes[i];
            let a = lane_change::accel_in_lane(&n, &drivers, i, lane, &p);
            if a <= p.emergency_decel {
                if let Some(l) = n.leader(i, lane).filter(|&l| n.gap(i, l) <= 0.0) {
                    out.audit.push(AuditEvent {
                        t: now + dt,
                        kind: AuditKind::EmergencyBrake,
                        vehicle: self.vehicles[i].info.id,
                        other: Some(self.vehicles[l].info.id),
                        value: n.gap(i, l),
                    });
                }
            }
            let (x, vx, ax) = if s.vx + a * dt < 0.0 {
                // Stops within the step.
                (s.x - s.vx * s.vx / (2.0 * a), 0.0, -s.vx / dt)
            } else {
                (s.x + s.vx * dt + 0.5 * a * dt * dt, s.vx + a * dt, a)
            };
            next[i] = VehicleState::new(x, g.lane_center(lane), vx, 0.0, ax);
            self.vehicles[i].control = ControlInput::new((ax - s.ax) / dt, 0.0);
        }
    }

    fn draw_arrival(&mut self) -> Arrival {
        let s = self.cfg.spawn;
        let automated = self.rng.random::<f64>() < s.penetration;
        let kmh = self.rng.random_range(s.desired_speed_kmh[0]..s.desired_speed_kmh[1]);
        let time_gap = self.rng.random_range(s.time_gap[0]..s.time_gap[1]);
        let length = self.rng.random_range(s.length[0]..s.length[1]);
        let lane_draw = self.rng.random::<f64>();
        Arrival {
            class: if automated { s.automated_class() } else { VehicleClass::Manual },
            desired_speed: kmh / 3.6,
            time_gap,
            length,
            lane_draw,
        }
    }

    /// Entry speed for `a` in `lane`, or `None` when the lane cannot take it.
    fn entry_speed(&self, a: &Arrival, lane: usize) -> Option<f64> {
        let g = &self.cfg.geometry;
        let p = &self.cfg.manual;
        // Anyone reaching into the lane counts, including vehicles mid lane change.
        let leader = self
            .vehicles
            .iter()
            .filter(|v| (v.state.y - g.lane_center(lane)).abs() < g.lane_width)
            .min_by(|u, w| u.state.x.total_cmp(&w.state.x));
        match leader {
            None => Some(a.desired_speed),
            Some(l) => {
                let gap = l.state.x - 0.5 * (l.info.length + a.length);
                if gap <= p.jam_gap {
                    return None;
                }
                let mut v = a.desired_speed.min(safe_speed(gap, l.state.vx.max(0.0), a.time_gap, p));
                if a.class.is_automated() {
                    // Enter behind the rear edge of the leader's penalty ellipse.
                    let length_term = 0.5 * (l.info.length + a.length);
                    v = v.min((l.state.x - 0.5 * length_term) / a.time_gap);
                }
                (v >= MIN_ENTRY_SPEED.min(a.desired_speed)).then_some(v)
            }
        }
    }

    fn spawn(&mut self, t: f64, out: &mut StepOutput) {
        if let Some(dist) = self.arrivals {
            let count = dist.sample(&mut self.rng) as u64;
            for _ in 0..count {
                let a = self.draw_arrival();
                self.queue.push_back(a);
            }
        }
        while let Some(a) = self.queue.front().copied() {
            let options: Vec<(usize, f64)> = (0..self.cfg.geometry.lanes)
                .filter_map(|lane| self.entry_speed(&a, lane).map(|v| (lane, v)))
                .collect();
            if options.is_empty() {
                break;
            }
            self.queue.pop_front();
            let pick = ((a.lane_draw * options.len() as f64) as usize).min(options.len() - 1);
            let (lane, speed) = options[pick];
            let state = VehicleState::new(0.0, self.cfg.geometry.lane_center(lane), speed, 0.0, 0.0);
            let info = self.insert(a.class, state, a.desired_speed, a.time_gap, a.length);
            let v = self.vehicles.last().expect("just inserted");
            out.rows.push(self.row(t, v));
            out.entered.push(info);
        }
    }

    fn audit(&self, t: f64, out: &mut StepOutput) {
        let g = &self.cfg.geometry;
        let mut by_lane: Vec<Vec<&Vehicle>> = vec![Vec::new(); g.lanes];
        for v in &self.vehicles {
            let s = &v.state;
            if s.y < 0.0 || s.y > g.width() {
                out.audit.push(AuditEvent {
                    t,
                    kind: AuditKind::OffRoad,
                    vehicle: v.info.id,
                    other: None,
                    value: s.y,
                });
            }
            if s.vx < -NEGATIVE_SPEED_TOLERANCE {
                out.audit.push(AuditEvent {
                    t,
                    kind: AuditKind::NegativeSpeed,
                    vehicle: v.info.id,
                    other: None,
                    value: s.vx,
                });
            }
            by_lane[g.lane_of(s.y)].push(v);
        }
        let max_length = self.vehicles.iter().map(|v| v.info.length).fold(0.0, f64::max);
        for lane in &mut by_lane {
            lane.sort_by(|a, b| a.state.x.total_cmp(&b.state.x).then(a.info.id.cmp(&b.info.id)));
            for (k, a) in lane.iter().enumerate() {
                for b in &lane[k + 1..] {
                    let dx = b.state.x - a.state.x;
                    if dx >= max_length {
                        break;
                    }
                    if dx < 0.5 * (a.info.length + b.info.length) {
                        out.audit.push(AuditEvent {
                            t,
                            kind: AuditKind::Overlap,
                            vehicle: a.info.id.min(b.info.id),
                            other: Some(a.info.id.max(b.info.id)),
                            value: dx,
                        });
                    }
                }
            }
        }
    }
}

/// Slowest speed at which an arrival is released onto a lane (m/s).
const MIN_ENTRY_SPEED: f64 = 5.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SimConfig {
        SimConfig {
            spawn: SpawnConfig {
                inflow: 0.0,
                ..SpawnConfig::default()
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_world_stays_empty() {
        let mut w = World::new(quiet()).unwrap();
        for _ in 0..100 {
            let out = w.step();
            assert!(out.rows.is_empty() && out.audit.is_empty());
        }
        assert_eq!(w.time(), 25.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = quiet();
        cfg.spawn.penetration = 1.5;
        assert!(World::new(cfg).err().unwrap().starts_with("spawn."));
    }

    #[test]
    fn manual_vehicle_leaves_the_section() {
        let mut cfg = quiet();
        cfg.section_length = 100.0;
        let mut w = World::new(cfg).unwrap();
        w.insert(VehicleClass::Manual, VehicleState::new(0.0, 1.5, 25.0, 0.0, 0.0), 25.0, 1.2, 4.5);
        let mut steps = 0;
        while !w.vehicles().is_empty() {
            w.step();
            steps += 1;
        }
        assert_eq!(steps, 16);
        assert_eq!((w.entered(), w.exited()), (1, 1));
    }

    #[test]
    fn overlap_is_audited() {
        let mut cfg = quiet();
        cfg.geometry.lanes = 1;
        let mut w = World::new(cfg).unwrap();
        w.insert(VehicleClass::Manual, VehicleState::new(100.0, 1.5, 0.0, 0.0, 0.0), 25.0, 1.2, 4.5);
        w.insert(VehicleClass::Manual, VehicleState::new(103.0, 1.5, 0.0, 0.0, 0.0), 25.0, 1.2, 4.5);
        let out = w.step();
        assert!(out.audit.iter().any(|e| e.kind == AuditKind::Overlap && e.vehicle == 0 && e.other == Some(1)));
    }
}
