//! Scenario files, single runs and penetration sweeps.
//!
//! A run directory holds:
//!
//! | file           | content                                            |
//! |----------------|----------------------------------------------------|
//! | `config.toml`  | effective scenario (reloads to the same run)       |
//! | `vehicles.csv` | static attributes of every entered vehicle         |
//! | `trace.csv`    | per-step per-vehicle state (only with tracing on)  |
//! | `plans.csv`    | one line per computed plan                         |
//! | `audit.csv`    | audit events; violations and informational ones    |
//! | `metrics.json` | [`MetricsReport`]                                  |
//! | `timing.csv`   | wall-clock cost per plan (not reproducible)        |
//! | `timing.json`  | [`TimingSummary`]                                  |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::RoadGeometry;
use crate::metrics::{files, ClassMetrics, MetricsAccumulator, MetricsReport, TimingSummary};
use crate::planner::PlannerParams;
use crate::sim::{ManualDriverParams, SimConfig, SpawnConfig, World};
use crate::trace::{write_csv, AuditEvent, CsvSink, PlanRecord, StepRow, TimingRecord, TraceError, VehicleInfo};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Key { key: String, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Everything needed to reproduce a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Simulated time per run (s).
    pub duration: f64,
    pub section_length: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write the per-step trace.
    pub trace: bool,
    pub geometry: RoadGeometry,
    pub spawn: SpawnConfig,
    pub manual: ManualDriverParams,
    pub planner: PlannerParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            duration: sim.duration,
            section_length: sim.section_length,
            dt: sim.dt,
            seeds: vec![1],
            output_dir: PathBuf::from("results"),
            trace: true,
            geometry: sim.geometry,
            spawn: sim.spawn,
            manual: sim.manual,
            planner: sim.planner,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Build from a parsed table, reporting the key path of unknown keys,
    /// mistyped values and failed range checks.
    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let reference = toml::Table::try_from(Self::default()).expect("defaults serialize");
        check_keys(&table, &reference, "")?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(key_err("seeds", "at least one seed is required"));
        }
        self.sim_config(self.seeds[0]).validate().map_err(|e| match e.split_once(' ') {
            Some((key, rest)) => key_err(key, rest),
            None => ConfigError::Parse(e),
        })
    }

    /// Apply `key.path=value` overrides; values use TOML syntax and fall
    /// back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse(format!("override `{item}` is not of the form key=value")))?;
            let key = key.trim();
            let value = parse_value(raw.trim());
            set_path(&mut table, key, value)?;
        }
        Self::from_table(table)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            geometry: self.geometry,
            section_length: self.section_length,
            dt: self.dt,
            duration: self.duration,
            seed,
            spawn: self.spawn,
            manual: self.manual,
            planner: self.planner,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn key_err(key: &str, message: &str) -> ConfigError {
    ConfigError::Key {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn type_name(v: &toml::Value) -> &'static str {
    match v {
        toml::Value::String(_) => "string",
        toml::Value::Integer(_) | toml::Value::Float(_) => "number",
        toml::Value::Boolean(_) => "boolean",
        toml::Value::Datetime(_) => "datetime",
        toml::Value::Array(_) => "array",
        toml::Value::Table(_) => "table",
    }
}

/// Compare against the serialized defaults: every key must exist there and
/// carry the same kind of value.
fn check_keys(table: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (key, value) in table {
        let path = join(prefix, key);
        let Some(expected) = reference.get(key) else {
            return Err(key_err(&path, "unknown key"));
        };
        match (value, expected) {
            (toml::Value::Table(t), toml::Value::Table(r)) => check_keys(t, r, &path)?,
            (toml::Value::Float(f), toml::Value::Integer(_)) if f.fract() != 0.0 => {
                return Err(key_err(&path, "expected an integer"));
            }
            (toml::Value::Array(items), toml::Value::Array(r)) => {
                if let Some(sample) = r.first() {
                    for (i, item) in items.iter().enumerate() {
                        if type_name(item) != type_name(sample) {
                            return Err(key_err(
                                &format!("{path}[{i}]"),
                                &format!("expected a {}, found a {}", type_name(sample), type_name(item)),
                            ));
                        }
                    }
                }
            }
            (v, e) if type_name(v) != type_name(e) => {
                return Err(key_err(
                    &path,
                    &format!("expected a {}, found a {}", type_name(e), type_name(v)),
                ));
            }
            _ => {}
        }
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| key_err(key, "empty key"))?;
    let mut current = table;
    for (i, part) in parts.iter().enumerate() {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(key_err(&parts[..=i].join("."), "not a table")),
        };
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Outcome of one simulation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub timing: TimingSummary,
}

impl RunOutcome {
    pub fn violations(&self) -> usize {
        self.metrics.audit.violations
    }
}

/// Run one seed of a scenario and write its files into `dir`.
pub fn run_seed(cfg: &ScenarioConfig, seed: u64, dir: &Path) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let effective = ScenarioConfig {
        seeds: vec![seed],
        ..cfg.clone()
    };
    let config_path = dir.join(files::CONFIG);
    std::fs::write(&config_path, effective.to_toml()).map_err(|e| io_err(&config_path, e))?;

    let sim = cfg.sim_config(seed);
    let steps = sim.steps();
    let mut world = World::new(sim).map_err(|e| ConfigError::Parse(e))?;
    let mut acc = MetricsAccumulator::new(cfg.section_length);
    let mut vehicles = CsvSink::<VehicleInfo>::create(&dir.join(files::VEHICLES))?;
    let mut plans = CsvSink::<PlanRecord>::create(&dir.join(files::PLANS))?;
    let mut audit = CsvSink::<AuditEvent>::create(&dir.join(files::AUDIT))?;
    let mut trace = match cfg.trace {
        true => Some(CsvSink::<StepRow>::create(&dir.join(files::TRACE))?),
        false => None,
    };
    let mut timings: Vec<TimingRecord> = Vec::new();
    for _ in 0..steps {
        let out = world.step();
        acc.record_step(&out);
        for info in &out.entered {
            vehicles.write(info)?;
        }
        if let Some(sink) = trace.as_mut() {
            for row in &out.rows {
                sink.write(row)?;
            }
        }
        for p in &out.plans {
            plans.write(p)?;
        }
        for e in &out.audit {
            audit.write(e)?;
        }
        timings.extend_from_slice(&out.timings);
    }
    vehicles.finish()?;
    plans.finish()?;
    audit.finish()?;
    if let Some(sink) = trace {
        sink.finish()?;
    }
    write_csv(&dir.join(files::TIMING), &timings)?;

    let metrics = acc.finalize();
    let timing = TimingSummary::from_records(&timings);
    let metrics_path = dir.join(files::METRICS);
    std::fs::write(&metrics_path, metrics.to_json()).map_err(|e| io_err(&metrics_path, e))?;
    let timing_path = dir.join(files::TIMING_SUMMARY);
    let timing_json = serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n";
    std::fs::write(&timing_path, timing_json).map_err(|e| io_err(&timing_path, e))?;
    Ok(RunOutcome { seed, metrics, timing })
}

/// Directory name of one seed inside a run or sweep cell.
pub fn seed_dir(seed: u64) -> String {
    format!("seed-{seed}")
}

/// Run every seed of the scenario under `dir`.
pub fn run_all(cfg: &ScenarioConfig, dir: &Path) -> Vec<Result<RunOutcome, RunError>> {
    cfg.seeds.iter().map(|&s| run_seed(cfg, s, &dir.join(seed_dir(s)))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Connected,
    NonConnected,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Connected => "connected",
            Mode::NonConnected => "non-connected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "connected" => Some(Mode::Connected),
            "non-connected" => Some(Mode::NonConnected),
            _ => None,
        }
    }
}

/// Directory name of one sweep cell.
pub fn cell_dir(penetration: f64, mode: Mode) -> String {
    format!("p{penetration:.2}-{}", mode.as_str())
}

/// Seed-averaged KPIs of one class; `None` where no seed had completed
/// trips of that class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassAverage {
    pub delay_s_per_km: Option<f64>,
    pub speed_kmh: Option<f64>,
    pub lane_changes: Option<f64>,
    pub speed_deviation: Option<f64>,
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub penetration: f64,
    pub mode: Mode,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub violations: usize,
    pub all: ClassAverage,
    pub automated: ClassAverage,
    pub manual: ClassAverage,
    pub automated_plans: Option<f64>,
    /// Seed-level errors, `seed: message`.
    pub errors: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

fn class_average<'a>(classes: impl Iterator<Item = Option<&'a ClassMetrics>> + Clone) -> ClassAverage {
    ClassAverage {
        delay_s_per_km: mean(classes.clone().flatten().map(|c| c.mean_delay_s_per_km)),
        speed_kmh: mean(classes.clone().flatten().map(|c| c.mean_speed_kmh)),
        lane_changes: mean(classes.clone().flatten().map(|c| c.mean_lane_changes)),
        speed_deviation: mean(classes.flatten().map(|c| c.mean_speed_deviation)),
    }
}

/// Average per-seed reports into one table row. Failed seeds are counted
/// and listed but do not enter the means.
pub fn aggregate(penetration: f64, mode: Mode, seeds: &[(u64, Result<MetricsReport, String>)]) -> SweepRow {
    let ok: Vec<&MetricsReport> = seeds.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    SweepRow {
        penetration,
        mode,
        seeds_ok: ok.len(),
        seeds_failed: seeds.len() - ok.len(),
        violations: ok.iter().map(|m| m.audit.violations).sum(),
        all: class_average(ok.iter().map(|m| m.all.as_ref())),
        automated: class_average(ok.iter().map(|m| m.automated.as_ref())),
        manual: class_average(ok.iter().map(|m| m.manual.as_ref())),
        automated_plans: mean(ok.iter().filter_map(|m| m.automated.as_ref()?.mean_plans)),
        errors: seeds
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| format!("{s}: {e}")))
            .collect(),
    }
}

const CLASS_COLUMNS: [&str; 4] = ["delay_s_per_km", "speed_kmh", "lane_changes", "speed_deviation"];

/// Render the sweep table as CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut header = vec!["penetration", "mode", "seeds_ok", "seeds_failed", "violations"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for class in ["all", "av", "manual"] {
        header.extend(CLASS_COLUMNS.iter().map(|c| format!("{class}_{c}")));
    }
    header.push("av_plans".into());
    header.push("errors".into());
    let mut out = header.join(",") + "\n";
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut fields = vec![
            r.penetration.to_string(),
            r.mode.as_str().to_string(),
            r.seeds_ok.to_string(),
            r.seeds_failed.to_string(),
            r.violations.to_string(),
        ];
        for c in [&r.all, &r.automated, &r.manual] {
            fields.extend([c.delay_s_per_km, c.speed_kmh, c.lane_changes, c.speed_deviation].map(cell));
        }
        fields.push(cell(r.automated_plans));
        let errors = r.errors.join("; ").replace('"', "'");
        fields.push(if errors.is_empty() { errors } else { format!("\"{errors}\"") });
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

/// Sweep over penetration rates and modes; one subdirectory per cell and
/// seed, plus `sweep.csv` with the aggregated table.
pub fn sweep(cfg: &ScenarioConfig, penetrations: &[f64], modes: &[Mode], dir: &Path) -> Result<Vec<SweepRow>, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut rows = Vec::new();
    for &penetration in penetrations {
        for &mode in modes {
            let mut cell = cfg.clone();
            cell.spawn.penetration = penetration;
            cell.spawn.connected = mode == Mode::Connected;
            let cell_path = dir.join(cell_dir(penetration, mode));
            let results: Vec<(u64, Result<MetricsReport, String>)> = match cell.validate() {
                Err(e) => cell.seeds.iter().map(|&s| (s, Err(e.to_string()))).collect(),
                Ok(()) => cell
                    .seeds
                    .iter()
                    .map(|&s| {
                        let r = run_seed(&cell, s, &cell_path.join(seed_dir(s)));
                        (s, r.map(|o| o.metrics).map_err(|e| e.to_string()))
                    })
                    .collect(),
            };
            rows.push(aggregate(penetration, mode, &results));
        }
    }
    let table = dir.join(SWEEP_TABLE);
    std::fs::write(&table, sweep_csv(&rows)).map_err(|e| io_err(&table, e))?;
    Ok(rows)
}

pub const SWEEP_TABLE: &str = "sweep.csv";

/// Rebuild the sweep table from the `metrics.json` files of a sweep
/// directory. Missing or unreadable files count as failed seeds.
pub fn aggregate_dir(dir: &Path, penetrations: &[f64], modes: &[Mode], seeds: &[u64]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &penetration in penetrations {
        for &mode in modes {
            let cell = dir.join(cell_dir(penetration, mode));
            let results: Vec<(u64, Result<MetricsReport, String>)> = seeds
                .iter()
                .map(|&s| {
                    let path = cell.join(seed_dir(s)).join(files::METRICS);
                    let report = std::fs::read_to_string(&path)
                        .map_err(|e| format!("{}: {e}", path.display()))
                        .and_then(|t| serde_json::from_str(&t).map_err(|e| format!("{}: {e}", path.display())));
                    (s, report)
                })
                .collect();
            rows.push(aggregate(penetration, mode, &results));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = ScenarioConfig::from_toml_str("[spawn]\ninflw = 10\n").unwrap_err();
        assert_eq!(err.to_string(), "spawn.inflw: unknown key");
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = ScenarioConfig::from_toml_str("[planner.solver]\nmax_iterations = \"many\"\n").unwrap_err();
        assert!(err.to_string().starts_with("planner.solver.max_iterations: expected a number"), "{err}");
    }

    #[test]
    fn range_error_reports_path() {
        let err = ScenarioConfig::from_toml_str("[spawn]\npenetration = 1.5\n").unwrap_err();
        assert!(err.to_string().starts_with("spawn.penetration"), "{err}");
    }

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::default()
            .with_overrides(&["spawn.inflow=1200".into(), "seeds=[4, 5]".into(), "output_dir=out/x".into()])
            .unwrap();
        assert_eq!(cfg.spawn.inflow, 1200.0);
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.output_dir, PathBuf::from("out/x"));
        assert!(ScenarioConfig::default().with_overrides(&["spawn.nope=1".into()]).is_err());
    }

    #[test]
    fn sweep_csv_leaves_missing_classes_empty() {
        let row = aggregate(0.0, Mode::Connected, &[(1, Err("boom".into()))]);
        let text = sweep_csv(&[row]);
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("0,connected,0,1,0,,,"), "{line}");
        assert!(line.ends_with("\"1: boom\""));
    }
}
