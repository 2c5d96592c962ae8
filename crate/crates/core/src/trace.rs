//! Records emitted by the simulator and their CSV representation.
//!
//! Floating-point fields are written with Rust's shortest round-trip
//! formatting, so reading a file back yields bit-identical values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::planner::{PlanKind, Trigger, VehicleClass, VehicleId};

/// Static attributes of a vehicle, written once when it enters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub length: f64,
    pub time_gap: f64,
    pub desired_speed: f64,
    pub entered_at: f64,
}

/// State of one vehicle at time `t`, with the controls applied over the
/// step that ended at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: f64,
    pub id: VehicleId,
    pub class: VehicleClass,
    pub x: f64,
    pub y: f64,
    pub lane: usize,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub jx: f64,
    pub ay: f64,
    pub plan_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub vehicle: VehicleId,
    pub plan_id: u64,
    pub trigger: Trigger,
    pub kind: PlanKind,
    pub horizon: usize,
    pub desired_speed: f64,
    pub dp_cost: Option<f64>,
    pub fda_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Wall-clock cost of one plan; not reproducible between runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub plan_id: u64,
    pub vehicle: VehicleId,
    pub dp_backward_us: Option<u64>,
    pub dp_bnb_us: u64,
    pub fda_us: u64,
    pub total_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    /// Footprints of two vehicles in the same lane overlap.
    Overlap,
    OffRoad,
    NegativeSpeed,
    /// A manual driver's gap closed and it braked at the emergency rate.
    EmergencyBrake,
    /// The simulator refused an automated vehicle's lane change.
    RejectedLaneChange,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::Overlap => "overlap",
            AuditKind::OffRoad => "off_road",
            AuditKind::NegativeSpeed => "negative_speed",
            AuditKind::EmergencyBrake => "emergency_brake",
            AuditKind::RejectedLaneChange => "rejected_lane_change",
        }
    }

    /// Whether the event breaks a safety invariant (the others are informational).
    pub fn is_violation(self) -> bool {
        matches!(self, AuditKind::Overlap | AuditKind::OffRoad | AuditKind::NegativeSpeed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub t: f64,
    pub kind: AuditKind,
    pub vehicle: VehicleId,
    pub other: Option<VehicleId>,
    pub value: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

impl TraceError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        TraceError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        TraceError::Csv {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Streaming CSV writer for one record type.
pub struct CsvSink<T> {
    writer: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Serialize> CsvSink<T> {
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        let file = File::create(path).map_err(|e| TraceError::io(path, e))?;
        Ok(Self {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
            _marker: std::marker::PhantomData,
        })
    }

    pub fn write(&mut self, record: &T) -> Result<(), TraceError> {
        self.writer.serialize(record).map_err(|e| TraceError::csv(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), TraceError> {
        self.writer.flush().map_err(|e| TraceError::io(&self.path, e))?;
        let inner = self.writer.into_inner().map_err(|e| TraceError::io(&self.path, e.into_error()))?;
        inner
            .into_inner()
            .map_err(|e| TraceError::io(&self.path, e.into_error()))?
            .flush()
            .map_err(|e| TraceError::io(&self.path, e))
    }
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), TraceError> {
    let mut sink = CsvSink::create(path)?;
    for r in records {
        sink.write(r)?;
    }
    sink.finish()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, TraceError> {
    let file = File::open(path).map_err(|e| TraceError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| TraceError::csv(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = vec![
            StepRow {
                t: 0.25,
                id: 3,
                class: VehicleClass::AutomatedConnected,
                x: 0.1 + 0.2,
                y: 4.5,
                lane: 1,
                vx: 27.123456789012345,
                vy: -1e-17,
                ax: f64::MIN_POSITIVE,
                jx: -4.0,
                ay: 1.0 / 3.0,
                plan_id: Some(9),
            },
            StepRow {
                t: 0.5,
                id: 4,
                class: VehicleClass::Manual,
                x: 0.0,
                y: 1.5,
                lane: 0,
                vx: 30.0,
                vy: 0.0,
                ax: 0.0,
                jx: 0.0,
                ay: 0.0,
                plan_id: None,
            },
        ];
        write_csv(&path, &rows).unwrap();
        let back: Vec<StepRow> = read_csv(&path).unwrap();
        assert_eq!(back, rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,id,class,x,y,lane,vx,vy,ax,jx,ay,plan_id\n"));
        assert!(text.contains(",automated_connected,"));
    }

    #[test]
    fn violation_kinds() {
        assert!(AuditKind::Overlap.is_violation());
        assert!(!AuditKind::EmergencyBrake.is_violation());
    }
}
