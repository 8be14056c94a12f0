//! Command-line front end: scenario files in, CSV logs, tables and SVG plots
//! out.
//!
//! Exit status is 0 on success, 1 on a configuration or I/O error and 2 when
//! the (hybrid-prediction) run ends in a collision.

pub mod config;
pub mod csv;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::simulator::{run_scenario, sweep_speeds, ScenarioConfig, SimLog, WeightMode};

pub use config::{load_scenario, parse_scenario, ConfigDiagnostic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_COLLISION: i32 = 2;

/// Soft budget for the mean replanning time.
pub const TIMING_BUDGET_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Single,
    Sweep,
    Ablation,
    Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Fixed,
    Adaptive,
}

impl From<WeightsArg> for WeightMode {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Fixed => WeightMode::Fixed,
            WeightsArg::Adaptive => WeightMode::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "cilqr", version, about = "Closed-loop scenarios for the constrained iLQR planner")]
pub struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    pub mode: Mode,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
    /// Overrides the length of the reachability part of the horizon (s).
    #[arg(long = "split-s")]
    pub split_s: Option<f64>,
    /// Overrides the weighting mode (single, ablation and timing runs; a sweep
    /// then covers only this mode).
    #[arg(long, value_enum)]
    pub weights: Option<WeightsArg>,
}

/// Everything one invocation needs, after the scenario file is resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub scenario_path: PathBuf,
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
    pub config: ScenarioConfig,
}

impl RunManifest {
    pub fn from_args(args: &Args) -> Result<Self, ConfigDiagnostic> {
        let mut config = load_scenario(&args.scenario)?;
        if let Some(s) = args.split_s {
            config.prediction.split_s = s;
        }
        if let Some(w) = args.weights {
            config.weights.mode = w.into();
            config.sweep.modes = vec![w.into()];
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        config.validate().map_err(|e| ConfigDiagnostic {
            key: Some(e.key),
            line: None,
            message: e.reason,
        })?;
        Ok(Self {
            scenario_path: args.scenario.clone(),
            mode: args.mode,
            seed: config.seed,
            out: args.out.clone(),
            plot: args.plot,
            config,
        })
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::write(dir.join(name), contents).map_err(|e| format!("cannot write {}: {e}", dir.join(name).display()))
}

fn prepare_out(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn write_plot(dir: &Path, name: &str, log: &SimLog, cfg: &ScenarioConfig) {
    // A failed plot is reported but never changes the exit status.
    if let Err(e) = write(dir, name, &plot::render_svg(log, cfg)) {
        eprintln!("warning: {e}");
    }
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

fn write_run(dir: &Path, prefix: &str, log: &SimLog, cfg: &ScenarioConfig, plot: bool) -> Result<(), String> {
    write(dir, &format!("{prefix}trajectory.csv"), &csv::trajectory_csv(log))?;
    write(dir, &format!("{prefix}metrics.csv"), &csv::metrics_csv(log, cfg))?;
    if plot {
        write_plot(dir, &format!("{prefix}plot.svg"), log, cfg);
    }
    Ok(())
}

pub fn cmd_run(m: &RunManifest) -> i32 {
    if let Err(e) = prepare_out(&m.out) {
        return fail(e);
    }
    let log = match run_scenario(&m.config) {
        Ok(log) => log,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_run(&m.out, "", &log, &m.config, m.plot) {
        return fail(e);
    }
    let c = csv::classify_log(&log, &m.config);
    println!(
        "{}: {} after {} ticks, min clearance {:.3} m, final speed {:.3} m/s",
        log.scenario,
        c.label,
        log.ticks.len(),
        c.min_clearance,
        log.ticks.last().map_or(f64::NAN, |t| t.ego.v)
    );
    if log.collided {
        EXIT_COLLISION
    } else {
        EXIT_OK
    }
}

pub fn cmd_sweep(m: &RunManifest) -> i32 {
    if let Err(e) = prepare_out(&m.out) {
        return fail(e);
    }
    let rows = match sweep_speeds(&m.config, &m.config.sweep.speeds, &m.config.sweep.modes) {
        Ok(rows) => rows,
        Err(e) => return fail(e),
    };
    if let Err(e) = write(&m.out, "sweep_table.csv", &csv::sweep_csv(&rows)) {
        return fail(e);
    }
    print!("{}", csv::sweep_table_text(&rows));
    EXIT_OK
}

/// Runs the scenario with long-term prediction only and with the hybrid
/// predictor, writing both logs and a one-line comparison per branch.
pub fn cmd_ablation(m: &RunManifest) -> i32 {
    if let Err(e) = prepare_out(&m.out) {
        return fail(e);
    }
    let hybrid_split = if m.config.prediction.split_s > 0.0 {
        m.config.prediction.split_s
    } else {
        0.5
    };
    let mut summary = String::from("branch,split_s,collided,behavior_label,min_clearance_m\n");
    let mut hybrid_collided = false;
    for (branch, split) in [("long_term_only", 0.0), ("hybrid", hybrid_split)] {
        let mut cfg = m.config.clone();
        cfg.prediction.split_s = split;
        let log = match run_scenario(&cfg) {
            Ok(log) => log,
            Err(e) => return fail(e),
        };
        if let Err(e) = write_run(&m.out, &format!("{branch}_"), &log, &cfg, m.plot) {
            return fail(e);
        }
        let c = csv::classify_log(&log, &cfg);
        summary.push_str(&format!(
            "{branch},{},{},{},{}\n",
            csv::fmt_f64(split),
            log.collided,
            c.label,
            csv::fmt_f64(c.min_clearance)
        ));
        println!(
            "{branch} (split {split} s): {}, min clearance {:.3} m",
            c.label, c.min_clearance
        );
        if branch == "hybrid" {
            hybrid_collided = log.collided;
        }
    }
    if let Err(e) = write(&m.out, "ablation.csv", &summary) {
        return fail(e);
    }
    if hybrid_collided {
        EXIT_COLLISION
    } else {
        EXIT_OK
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the scenario with wall-clock timing and reports per-tick solve times.
/// The budget check is informational only.
pub fn cmd_timing(m: &RunManifest) -> i32 {
    if let Err(e) = prepare_out(&m.out) {
        return fail(e);
    }
    let mut cfg = m.config.clone();
    cfg.record_timing = true;
    let log = match run_scenario(&cfg) {
        Ok(log) => log,
        Err(e) => return fail(e),
    };
    if let Err(e) = write(&m.out, "timing.csv", &csv::timing_csv(&log)) {
        return fail(e);
    }
    let times: Vec<f64> = log.ticks.iter().map(|t| t.solve_ms).collect();
    let (mean, std) = mean_std(&times);
    println!("solve time over {} ticks: mean {mean:.3} ms, std {std:.3} ms", times.len());
    if mean > 2.0 * TIMING_BUDGET_MS {
        eprintln!("warning: mean solve time is more than twice the {TIMING_BUDGET_MS} ms budget");
    } else if mean > TIMING_BUDGET_MS {
        eprintln!("warning: mean solve time exceeds the {TIMING_BUDGET_MS} ms budget");
    } else {
        println!("within the {TIMING_BUDGET_MS} ms budget");
    }
    EXIT_OK
}

pub fn run(args: &Args) -> i32 {
    let manifest = match RunManifest::from_args(args) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match manifest.mode {
        Mode::Single => cmd_run(&manifest),
        Mode::Sweep => cmd_sweep(&manifest),
        Mode::Ablation => cmd_ablation(&manifest),
        Mode::Timing => cmd_timing(&manifest),
    }
}
