//! Sweeps over the lead vehicle's speed in both weighting modes.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::behavior::BehaviorScript;
use super::classify::{classify_behavior, BehaviorLabel};
use super::run::run_scenario;
use super::scenario::{ConfigError, ScenarioConfig, WeightMode};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PLANNER_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub speed: f64,
    pub mode: WeightMode,
    pub label: BehaviorLabel,
    pub max_lateral_dev: f64,
    pub min_clearance: f64,
}

/// `n` speeds from `start` in increments of `step`, rounded to the step's
/// precision so that printed values are exact.
pub fn speed_grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6).collect()
}

fn set_lead_speed(cfg: &mut ScenarioConfig, speed: f64) {
    if let Some(t) = cfg.targets.first_mut() {
        match &mut t.behavior {
            BehaviorScript::ConstantSpeed { v }
            | BehaviorScript::CutIn { v, .. }
            | BehaviorScript::SuddenAccel { v, .. } => *v = speed,
        }
    }
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `base` once per speed and mode; target 0 is the lead vehicle whose
/// speed is varied. Rows come back in (mode, speed) order whatever the
/// scheduling.
pub fn sweep_speeds(base: &ScenarioConfig, speeds: &[f64], modes: &[WeightMode]) -> Result<Vec<SweepRow>, ConfigError> {
    base.validate()?;
    if speeds.is_empty() {
        return Err(ConfigError {
            key: "sweep.speeds".into(),
            reason: "needs at least one speed".into(),
        });
    }
    if modes.is_empty() {
        return Err(ConfigError {
            key: "sweep.modes".into(),
            reason: "needs at least one mode".into(),
        });
    }
    if base.targets.is_empty() {
        return Err(ConfigError {
            key: "targets".into(),
            reason: "a sweep needs a lead target".into(),
        });
    }
    let jobs: Vec<(WeightMode, f64)> = modes
        .iter()
        .flat_map(|&m| speeds.iter().map(move |&s| (m, s)))
        .collect();
    let run = |&(mode, speed): &(WeightMode, f64)| -> Result<SweepRow, ConfigError> {
        let mut cfg = base.clone();
        cfg.weights.mode = mode;
        set_lead_speed(&mut cfg, speed);
        let log = run_scenario(&cfg)?;
        let c = classify_behavior(&log, 0, cfg.target_geometry.body_length, cfg.classifier.lane_band_m);
        Ok(SweepRow {
            speed,
            mode,
            label: c.label,
            max_lateral_dev: c.max_lateral_dev,
            min_clearance: c.min_clearance,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .expect("thread pool");
    pool.install(|| jobs.par_iter().map(run).collect())
}

/// Per-label share of one mode's sweep, with the speed ranges it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub label: BehaviorLabel,
    pub count: usize,
    pub percent: f64,
    /// Contiguous runs of grid speeds, as (first, last).
    pub ranges: Vec<(f64, f64)>,
}

pub fn summarize(rows: &[SweepRow], mode: WeightMode) -> Vec<LabelSummary> {
    let mut mine: Vec<&SweepRow> = rows.iter().filter(|r| r.mode == mode).collect();
    mine.sort_by(|a, b| a.speed.total_cmp(&b.speed));
    let total = mine.len().max(1);
    let mut ranges: BTreeMap<BehaviorLabel, Vec<(f64, f64)>> = BTreeMap::new();
    let mut counts: BTreeMap<BehaviorLabel, usize> = BTreeMap::new();
    let mut prev: Option<BehaviorLabel> = None;
    for r in &mine {
        *counts.entry(r.label).or_default() += 1;
        let list = ranges.entry(r.label).or_default();
        match (prev, list.last_mut()) {
            (Some(p), Some(last)) if p == r.label => last.1 = r.speed,
            _ => list.push((r.speed, r.speed)),
        }
        prev = Some(r.label);
    }
    BehaviorLabel::ALL
        .iter()
        .map(|&label| {
            let count = counts.get(&label).copied().unwrap_or(0);
            LabelSummary {
                label,
                count,
                percent: 100.0 * count as f64 / total as f64,
                ranges: ranges.remove(&label).unwrap_or_default(),
            }
        })
        .collect()
}

/// Lowest speed from which every faster grid speed is labelled lane keep,
/// provided everything below it is an overtake.
pub fn switch_speed(rows: &[SweepRow], mode: WeightMode) -> Option<f64> {
    let mut mine: Vec<&SweepRow> = rows.iter().filter(|r| r.mode == mode).collect();
    mine.sort_by(|a, b| a.speed.total_cmp(&b.speed));
    let first_keep = mine.iter().position(|r| r.label == BehaviorLabel::LaneKeep)?;
    let clean = mine[..first_keep].iter().all(|r| r.label == BehaviorLabel::Overtake)
        && mine[first_keep..].iter().all(|r| r.label == BehaviorLabel::LaneKeep);
    clean.then(|| mine[first_keep].speed)
}
