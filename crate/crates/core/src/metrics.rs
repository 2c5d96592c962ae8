//! Evaluation KPIs per vehicle class.
//!
//! The accumulator consumes exactly the records written to the trace files,
//! so a report computed online equals one recomputed from disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::planner::{PlanKind, Trigger, VehicleId};
use crate::sim::StepOutput;
use crate::trace::{read_csv, AuditEvent, AuditKind, PlanRecord, StepRow, TimingRecord, TraceError, VehicleInfo};

/// File names used inside a run directory.
pub mod files {
    pub const VEHICLES: &str = "vehicles.csv";
    pub const TRACE: &str = "trace.csv";
    pub const PLANS: &str = "plans.csv";
    pub const AUDIT: &str = "audit.csv";
    pub const TIMING: &str = "timing.csv";
    pub const METRICS: &str = "metrics.json";
    pub const TIMING_SUMMARY: &str = "timing.json";
    pub const CONFIG: &str = "config.toml";
}

#[derive(Debug, Clone, Default)]
struct Track {
    info: Option<VehicleInfo>,
    last: Option<StepRow>,
    exit_time: Option<f64>,
    lane_changes: usize,
    deviation_sum: f64,
    samples: usize,
    plans: usize,
}

/// Streaming KPI accumulator.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    section_length: f64,
    tracks: BTreeMap<VehicleId, Track>,
    plan_kinds: BTreeMap<PlanKind, usize>,
    triggers: BTreeMap<Trigger, usize>,
    audit: BTreeMap<AuditKind, usize>,
    av_abs_jx: Vec<f64>,
    av_abs_ay: Vec<f64>,
    av_abs_ax_sum: f64,
    min_vx: Option<f64>,
}

impl MetricsAccumulator {
    pub fn new(section_length: f64) -> Self {
        Self {
            section_length,
            tracks: BTreeMap::new(),
            plan_kinds: BTreeMap::new(),
            triggers: BTreeMap::new(),
            audit: BTreeMap::new(),
            av_abs_jx: Vec::new(),
            av_abs_ay: Vec::new(),
            av_abs_ax_sum: 0.0,
            min_vx: None,
        }
    }

    pub fn vehicle_entered(&mut self, info: &VehicleInfo) {
        self.tracks.entry(info.id).or_default().info = Some(*info);
    }

    /// Rows of one vehicle must arrive in time order.
    pub fn record_row(&mut self, row: &StepRow) {
        let length = self.section_length;
        let track = self.tracks.entry(row.id).or_default();
        if let Some(prev) = &track.last {
            if prev.lane != row.lane {
                track.lane_changes += 1;
            }
            if track.exit_time.is_none() && row.x >= length && prev.x < length {
                let share = (length - prev.x) / (row.x - prev.x);
                track.exit_time = Some(prev.t + share * (row.t - prev.t));
            }
        }
        if row.x < length {
            if let Some(info) = &track.info {
                track.deviation_sum += (row.vx - info.desired_speed).abs();
                track.samples += 1;
            }
        }
        track.last = Some(*row);
        self.min_vx = Some(self.min_vx.map_or(row.vx, |m| m.min(row.vx)));
        if row.class.is_automated() {
            self.av_abs_jx.push(row.jx.abs());
            self.av_abs_ay.push(row.ay.abs());
            self.av_abs_ax_sum += row.ax.abs();
        }
    }

    pub fn record_plan(&mut self, plan: &PlanRecord) {
        self.tracks.entry(plan.vehicle).or_default().plans += 1;
        *self.plan_kinds.entry(plan.kind).or_default() += 1;
        *self.triggers.entry(plan.trigger).or_default() += 1;
    }

    pub fn record_audit(&mut self, event: &AuditEvent) {
        *self.audit.entry(event.kind).or_default() += 1;
    }

    pub fn record_step(&mut self, out: &StepOutput) {
        for info in &out.entered {
            self.vehicle_entered(info);
        }
        for row in &out.rows {
            self.record_row(row);
        }
        for plan in &out.plans {
            self.record_plan(plan);
        }
        for event in &out.audit {
            self.record_audit(event);
        }
    }

    pub fn finalize(&self) -> MetricsReport {
        let mut all = ClassSums::default();
        let mut automated = ClassSums::default();
        let mut manual = ClassSums::default();
        let mut entered = 0;
        for track in self.tracks.values() {
            let Some(info) = &track.info else { continue };
            entered += 1;
            let Some(exit) = track.exit_time else { continue };
            let travel = exit - info.entered_at;
            let trip = TripKpis {
                delay: (travel - self.section_length / info.desired_speed).max(0.0) / (self.section_length / 1000.0),
                speed: self.section_length / travel * 3.6,
                lane_changes: track.lane_changes as f64,
                deviation: if track.samples > 0 {
                    track.deviation_sum / track.samples as f64
                } else {
                    0.0
                },
                plans: track.plans as f64,
            };
            all.add(&trip);
            if info.class.is_automated() {
                automated.add(&trip);
            } else {
                manual.add(&trip);
            }
        }
        let completed = all.count;
        let violations = self.audit.iter().filter(|(k, _)| k.is_violation()).map(|(_, n)| n).sum();
        let samples = self.av_abs_jx.len();
        MetricsReport {
            section_length: self.section_length,
            vehicles_entered: entered,
            vehicles_completed: completed,
            all: all.finish(false),
            automated: automated.finish(true),
            manual: manual.finish(false),
            plans: PlanCounts {
                total: self.plan_kinds.values().sum(),
                by_kind: self.plan_kinds.iter().map(|(k, n)| (k.as_str().to_string(), *n)).collect(),
                by_trigger: self.triggers.iter().map(|(k, n)| (k.as_str().to_string(), *n)).collect(),
            },
            audit: AuditCounts {
                violations,
                by_kind: self.audit.iter().map(|(k, n)| (k.as_str().to_string(), *n)).collect(),
            },
            min_vx: self.min_vx,
            av_motion: (samples > 0).then(|| MotionStats {
                samples,
                p99_abs_jx: percentile(&self.av_abs_jx, 0.99),
                max_abs_jx: self.av_abs_jx.iter().copied().fold(0.0, f64::max),
                p99_abs_ay: percentile(&self.av_abs_ay, 0.99),
                max_abs_ay: self.av_abs_ay.iter().copied().fold(0.0, f64::max),
                mean_abs_ax: self.av_abs_ax_sum / samples as f64,
            }),
        }
    }
}

/// Nearest-rank percentile.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

struct TripKpis {
    delay: f64,
    speed: f64,
    lane_changes: f64,
    deviation: f64,
    plans: f64,
}

#[derive(Default)]
struct ClassSums {
    count: usize,
    delay: f64,
    speed: f64,
    lane_changes: f64,
    deviation: f64,
    plans: f64,
}

impl ClassSums {
    fn add(&mut self, t: &TripKpis) {
        self.count += 1;
        self.delay += t.delay;
        self.speed += t.speed;
        self.lane_changes += t.lane_changes;
        self.deviation += t.deviation;
        self.plans += t.plans;
    }

    fn finish(&self, with_plans: bool) -> Option<ClassMetrics> {
        let n = self.count as f64;
        (self.count > 0).then(|| ClassMetrics {
            vehicles: self.count,
            mean_delay_s_per_km: self.delay / n,
            mean_speed_kmh: self.speed / n,
            mean_lane_changes: self.lane_changes / n,
            mean_speed_deviation: self.deviation / n,
            mean_plans: with_plans.then(|| self.plans / n),
        })
    }
}

/// Means over vehicles that completed the section; `None` for a class with
/// no completed trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub vehicles: usize,
    pub mean_delay_s_per_km: f64,
    pub mean_speed_kmh: f64,
    pub mean_lane_changes: f64,
    /// Mean over each trip of the time-averaged `|v_x - v_d|` (m/s).
    pub mean_speed_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_plans: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCounts {
    pub total: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub by_trigger: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub violations: usize,
    pub by_kind: BTreeMap<String, usize>,
}

/// Control and acceleration magnitudes over every automated-vehicle row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub samples: usize,
    pub p99_abs_jx: f64,
    pub max_abs_jx: f64,
    pub p99_abs_ay: f64,
    pub max_abs_ay: f64,
    pub mean_abs_ax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub section_length: f64,
    pub vehicles_entered: usize,
    pub vehicles_completed: usize,
    pub all: Option<ClassMetrics>,
    pub automated: Option<ClassMetrics>,
    pub manual: Option<ClassMetrics>,
    pub plans: PlanCounts,
    pub audit: AuditCounts,
    pub min_vx: Option<f64>,
    pub av_motion: Option<MotionStats>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Rebuild the report from the CSV files of a traced run.
    pub fn from_trace_dir(dir: &Path, section_length: f64) -> Result<Self, TraceError> {
        let mut acc = MetricsAccumulator::new(section_length);
        for info in read_csv::<VehicleInfo>(&dir.join(files::VEHICLES))? {
            acc.vehicle_entered(&info);
        }
        for row in read_csv::<StepRow>(&dir.join(files::TRACE))? {
            acc.record_row(&row);
        }
        for plan in read_csv::<PlanRecord>(&dir.join(files::PLANS))? {
            acc.record_plan(&plan);
        }
        for event in read_csv::<AuditEvent>(&dir.join(files::AUDIT))? {
            acc.record_audit(&event);
        }
        Ok(acc.finalize())
    }
}

/// Mean and maximum of one timing stage (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub samples: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl StageTiming {
    fn from_us(values: impl Iterator<Item = u64>) -> Option<Self> {
        let (mut n, mut sum, mut max) = (0usize, 0u64, 0u64);
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
        }
        (n > 0).then(|| Self {
            samples: n,
            mean_ms: sum as f64 / n as f64 / 1000.0,
            max_ms: max as f64 / 1000.0,
        })
    }
}

/// Wall-clock planner cost. Kept apart from [`MetricsReport`] because it
/// differs between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub plans: usize,
    pub dp_backward: Option<StageTiming>,
    pub dp_bnb: Option<StageTiming>,
    pub fda: Option<StageTiming>,
    pub total: Option<StageTiming>,
}

impl TimingSummary {
    pub fn from_records(records: &[TimingRecord]) -> Self {
        Self {
            plans: records.len(),
            dp_backward: StageTiming::from_us(records.iter().filter_map(|r| r.dp_backward_us)),
            dp_bnb: StageTiming::from_us(records.iter().map(|r| r.dp_bnb_us)),
            fda: StageTiming::from_us(records.iter().map(|r| r.fda_us)),
            total: StageTiming::from_us(records.iter().map(|r| r.total_us)),
        }
    }
}
