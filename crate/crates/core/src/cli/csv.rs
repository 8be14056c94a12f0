//! CSV output. Floats are written in scientific notation with 17 significant
//! digits, which parses back to the identical `f64`.

use std::fmt::Write as _;

use crate::simulator::{
    classify_behavior, summarize, BehaviorLabel, Classification, ScenarioConfig, SimLog, SweepRow, WeightMode,
};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(n_targets: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "tick",
        "t_s",
        "ego_px_m",
        "ego_py_m",
        "ego_v_mps",
        "ego_theta_rad",
        "a_mps2",
        "delta_rad",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..n_targets {
        cols.push(format!("tgt{i}_px_m"));
        cols.push(format!("tgt{i}_py_m"));
        cols.push(format!("tgt{i}_v_mps"));
    }
    cols.extend(["min_clearance_m", "solve_ms", "iters"].map(String::from));
    cols
}

pub fn trajectory_csv(log: &SimLog) -> String {
    let n_targets = log.ticks.first().map_or(0, |t| t.targets.len());
    let mut out = trajectory_header(n_targets).join(",");
    out.push('\n');
    for t in &log.ticks {
        let mut fields = vec![t.tick.to_string()];
        fields.extend(
            [
                t.t,
                t.ego.px,
                t.ego.py,
                t.ego.v,
                t.ego.theta,
                t.control.a,
                t.control.delta,
            ]
            .map(fmt_f64),
        );
        for s in &t.targets {
            fields.extend([s.px, s.py, s.v].map(fmt_f64));
        }
        fields.push(fmt_f64(t.min_clearance));
        fields.push(fmt_f64(t.solve_ms));
        fields.push(t.iterations.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// One parsed row of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub tick: usize,
    /// Every float column in file order, from `t_s` to `solve_ms`.
    pub values: Vec<f64>,
    pub iters: usize,
}

pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<String>, Vec<TrajectoryRow>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(format!("row {}: expected {} fields, got {}", i + 1, header.len(), fields.len()));
        }
        let bad = |f: &str| format!("row {}: cannot parse `{f}`", i + 1);
        let tick = fields[0].parse().map_err(|_| bad(fields[0]))?;
        let iters = fields[fields.len() - 1].parse().map_err(|_| bad(fields[fields.len() - 1]))?;
        let values = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
            .collect::<Result<_, _>>()?;
        rows.push(TrajectoryRow { tick, values, iters });
    }
    Ok((header, rows))
}

pub fn classify_log(log: &SimLog, cfg: &ScenarioConfig) -> Classification {
    classify_behavior(log, 0, cfg.target_geometry.body_length, cfg.classifier.lane_band_m)
}

pub fn metrics_csv(log: &SimLog, cfg: &ScenarioConfig) -> String {
    let c = classify_log(log, cfg);
    let last = log.ticks.last();
    let min_speed = log.ticks.iter().map(|t| t.ego.v).fold(f64::INFINITY, f64::min);
    let iters: usize = log.ticks.iter().map(|t| t.iterations).sum();
    let degenerate = log.ticks.iter().filter(|t| t.reach_degenerate).count();
    let mut out = String::from("metric,value\n");
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k},{v}");
    };
    row("scenario", log.scenario.clone());
    row("seed", cfg.seed.to_string());
    row("ticks", log.ticks.len().to_string());
    row("collided", log.collided.to_string());
    row("behavior_label", c.label.to_string());
    row("passed_lead", c.passed.to_string());
    row("band_exits", c.band_exits.to_string());
    row("max_lateral_dev_m", fmt_f64(c.max_lateral_dev));
    row("min_clearance_m", fmt_f64(c.min_clearance));
    row("final_speed_mps", fmt_f64(last.map_or(f64::NAN, |t| t.ego.v)));
    row("min_speed_mps", fmt_f64(min_speed));
    row("total_iters", iters.to_string());
    row("diverged_ticks", log.diverged_ticks().to_string());
    row("degenerate_reach_ticks", degenerate.to_string());
    out
}

fn mode_name(m: WeightMode) -> &'static str {
    match m {
        WeightMode::Fixed => "fixed",
        WeightMode::Adaptive => "adaptive",
    }
}

fn fmt_ranges(ranges: &[(f64, f64)]) -> String {
    ranges
        .iter()
        .map(|(a, b)| if a == b { format!("{a:.1}") } else { format!("{a:.1}-{b:.1}") })
        .collect::<Vec<_>>()
        .join(";")
}

/// Per-run rows, then a blank line and the aggregate block: occurrences,
/// percentage and speed ranges per mode and label.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("speed_mps,mode,behavior_label,max_lateral_dev_m,min_clearance_m\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.1},{},{},{},{}",
            r.speed,
            mode_name(r.mode),
            r.label,
            fmt_f64(r.max_lateral_dev),
            fmt_f64(r.min_clearance)
        );
    }
    out.push('\n');
    out.push_str("mode,behavior_label,occurrences,percentage,speed_range\n");
    for mode in modes_in(rows) {
        for s in summarize(rows, mode) {
            if s.label == BehaviorLabel::Collision && s.count == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{}",
                mode_name(mode),
                s.label,
                s.count,
                s.percent,
                fmt_ranges(&s.ranges)
            );
        }
    }
    out
}

fn modes_in(rows: &[SweepRow]) -> Vec<WeightMode> {
    let mut modes = Vec::new();
    for r in rows {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    modes
}

/// Plain-text table in the shape of the behaviour comparison: one column
/// group per mode.
pub fn sweep_table_text(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    for mode in modes_in(rows) {
        let _ = writeln!(out, "{} weights", mode_name(mode));
        let _ = writeln!(out, "  {:<10} {:>11} {:>10}  speed range (m/s)", "behavior", "occurrences", "percent");
        for s in summarize(rows, mode) {
            if s.label == BehaviorLabel::Collision && s.count == 0 {
                continue;
            }
            let ranges = if s.ranges.is_empty() { "-".into() } else { fmt_ranges(&s.ranges) };
            let _ = writeln!(out, "  {:<10} {:>11} {:>10.2}  {}", s.label, s.count, s.percent, ranges);
        }
    }
    out
}

pub fn timing_csv(log: &SimLog) -> String {
    let mut out = String::from("tick,solve_ms,iters,obstacles\n");
    for t in &log.ticks {
        let _ = writeln!(out, "{},{},{},{}", t.tick, fmt_f64(t.solve_ms), t.iterations, t.obstacles.len());
    }
    out
}
