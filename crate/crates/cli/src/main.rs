use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motorway_planner::experiment::{self, Mode, RunOutcome, ScenarioConfig, SweepRow};
use motorway_planner::metrics::files;

/// Motorway traffic simulation with optimization-based automated vehicles.
///
/// Exit status: 0 when every run finished without safety violations,
/// 1 when a run failed or the audit found violations, 2 on usage or
/// configuration errors.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario once per configured seed.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate every (penetration, mode, seed) combination and aggregate.
    Sweep {
        config: PathBuf,
        /// Comma-separated penetration rates.
        #[arg(long, value_delimiter = ',', required = true)]
        penetrations: Vec<f64>,
        /// Comma-separated modes: connected, non-connected.
        #[arg(long, value_delimiter = ',', default_value = "connected,non-connected", value_parser = parse_mode)]
        modes: Vec<Mode>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Simulated time per run in seconds (overrides `duration`).
    #[arg(long)]
    duration: Option<f64>,
    /// Arrival rate in veh/h (overrides `spawn.inflow`).
    #[arg(long)]
    inflow: Option<f64>,
    /// Results root (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-step trace.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    /// Skip the per-step trace.
    #[arg(long, overrides_with = "trace")]
    no_trace: bool,
    /// Override any configuration key, e.g. `--set planner.horizon=24`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (expected connected or non-connected)"))
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut all = Vec::new();
        if let Some(seeds) = &self.seeds {
            let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
            all.push(format!("seeds=[{}]", list.join(",")));
        }
        if let Some(d) = self.duration {
            all.push(format!("duration={d:?}"));
        }
        if let Some(q) = self.inflow {
            all.push(format!("spawn.inflow={q:?}"));
        }
        if let Some(out) = &self.out {
            all.push(format!("output_dir={:?}", out.display().to_string()));
        }
        if self.trace {
            all.push("trace=true".into());
        }
        if self.no_trace {
            all.push("trace=false".into());
        }
        all.extend(self.overrides.iter().cloned());
        all
    }

    fn load(&self, path: &Path) -> Result<ScenarioConfig, String> {
        ScenarioConfig::load(path)
            .and_then(|c| c.with_overrides(&self.overrides()))
            .map_err(|e| e.to_string())
    }
}

/// `<root>/<verb>-<local time>`, with a numeric suffix if that exists.
fn results_dir(root: &Path, verb: &str) -> Result<PathBuf, String> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = root.join(format!("{verb}-{stamp}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(dir)
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> Result<(), String> {
    let path = dir.join(files::CONFIG);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_outcome(o: &RunOutcome) {
    let m = &o.metrics;
    print!("seed {}: {} entered, {} completed", o.seed, m.vehicles_entered, m.vehicles_completed);
    if let Some(all) = &m.all {
        print!(
            ", delay {:.2} s/km, speed {:.1} km/h, |vx-vd| {:.2} m/s",
            all.mean_delay_s_per_km, all.mean_speed_kmh, all.mean_speed_deviation
        );
    }
    println!(", {} violations", m.audit.violations);
}

fn print_row(r: &SweepRow) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    println!(
        "p={:.2} {:<13} ok={} failed={} violations={} delay={} speed={} av_plans={}",
        r.penetration,
        r.mode.as_str(),
        r.seeds_ok,
        r.seeds_failed,
        r.violations,
        fmt(r.all.delay_s_per_km),
        fmt(r.all.speed_kmh),
        fmt(r.automated_plans),
    );
    for e in &r.errors {
        eprintln!("  seed {e}");
    }
}

fn run(config: &Path, common: &Common) -> Result<bool, String> {
    let cfg = common.load(config)?;
    let dir = results_dir(&cfg.output_dir, "run")?;
    write_config(&dir, &cfg)?;
    println!("results: {}", dir.display());
    let mut clean = true;
    for result in experiment::run_all(&cfg, &dir) {
        match result {
            Ok(o) => {
                print_outcome(&o);
                clean &= o.violations() == 0;
            }
            Err(e) => {
                eprintln!("error: {e}");
                clean = false;
            }
        }
    }
    Ok(clean)
}

fn sweep(config: &Path, penetrations: &[f64], modes: &[Mode], common: &Common) -> Result<bool, String> {
    let cfg = common.load(config)?;
    if let Some(p) = penetrations.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("penetration {p} is outside [0, 1]"));
    }
    let dir = results_dir(&cfg.output_dir, "sweep")?;
    write_config(&dir, &cfg)?;
    println!("results: {}", dir.display());
    let rows = experiment::sweep(&cfg, penetrations, modes, &dir).map_err(|e| e.to_string())?;
    for r in &rows {
        print_row(r);
    }
    println!("table: {}", dir.join(experiment::SWEEP_TABLE).display());
    Ok(rows.iter().all(|r| r.seeds_failed == 0 && r.violations == 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, common } => run(config, common),
        Command::Sweep {
            config,
            penetrations,
            modes,
            common,
        } => sweep(config, penetrations, modes, common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
