//! Labelling a closed-loop run by what the ego did about the lead target.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::run::SimLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorLabel {
    Overtake,
    LaneKeep,
    Transient,
    Collision,
}

impl BehaviorLabel {
    pub const ALL: [BehaviorLabel; 4] = [
        BehaviorLabel::Overtake,
        BehaviorLabel::LaneKeep,
        BehaviorLabel::Transient,
        BehaviorLabel::Collision,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BehaviorLabel::Overtake => "overtake",
            BehaviorLabel::LaneKeep => "lane_keep",
            BehaviorLabel::Transient => "transient",
            BehaviorLabel::Collision => "collision",
        }
    }
}

impl fmt::Display for BehaviorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BehaviorLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviorLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown behaviour label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: BehaviorLabel,
    pub max_lateral_dev: f64,
    /// Number of times the lateral offset left the lane band.
    pub band_exits: usize,
    /// Whether the ego got ahead of the lead target.
    pub passed: bool,
    pub min_clearance: f64,
}

/// Labels a run. The lead target is the one with index `lead`; the ego has
/// passed it once its rear axle is beyond the target's front bumper.
///
/// * `Collision`: the run stopped on an overlap.
/// * `Overtake`: the ego left its lane band and passed the lead target.
/// * `LaneKeep`: the ego stayed inside the band for the whole run.
/// * `Transient`: anything else, typically leaving the lane and coming back
///   without completing a pass.
pub fn classify_behavior(log: &SimLog, lead: usize, target_length: f64, lane_band: f64) -> Classification {
    let max_lateral_dev = log.max_lateral_deviation();
    let min_clearance = log.min_clearance();
    let mut band_exits = 0;
    let mut inside = true;
    let mut passed = false;
    for t in &log.ticks {
        let now_inside = (t.ego.py - log.reference_y).abs() <= lane_band;
        if inside && !now_inside {
            band_exits += 1;
        }
        inside = now_inside;
        if let Some(tgt) = t.targets.get(lead) {
            let (s, c) = tgt.theta.sin_cos();
            let along = c * (t.ego.px - tgt.px) + s * (t.ego.py - tgt.py);
            passed |= along > 0.5 * target_length;
        }
    }
    let label = if log.collided {
        BehaviorLabel::Collision
    } else if passed && band_exits > 0 {
        BehaviorLabel::Overtake
    } else if band_exits == 0 {
        BehaviorLabel::LaneKeep
    } else {
        BehaviorLabel::Transient
    };
    Classification {
        label,
        max_lateral_dev,
        band_exits,
        passed,
        min_clearance,
    }
}
