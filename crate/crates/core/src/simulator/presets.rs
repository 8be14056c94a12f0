//! Built-in scenarios.

use std::f64::consts::PI;

use super::behavior::BehaviorScript;
use super::scenario::{ScenarioConfig, TargetConfig, WeightMode};

pub const PRESET_NAMES: [&str; 4] = ["overtake", "cut_in", "sudden_accel", "sweep_base"];

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "overtake" => Some(overtake()),
        "cut_in" => Some(cut_in()),
        "sudden_accel" => Some(sudden_accel()),
        "sweep_base" => Some(sweep_base(8.0, WeightMode::Adaptive)),
        _ => None,
    }
}

/// A slow vehicle 20 m ahead in the ego lane and an oncoming vehicle in the
/// other lane.
pub fn overtake() -> ScenarioConfig {
    ScenarioConfig {
        name: "overtake".into(),
        duration_s: 15.0,
        targets: vec![
            TargetConfig {
                px: 23.6 + 2.25,
                py: -3.0,
                theta: 0.0,
                behavior: BehaviorScript::ConstantSpeed { v: 8.0 },
            },
            TargetConfig {
                px: 160.0,
                py: 3.0,
                theta: PI,
                behavior: BehaviorScript::ConstantSpeed { v: 10.0 },
            },
        ],
        ..Default::default()
    }
}

/// A vehicle in the other lane, 5 m ahead of the ego's front bumper, merges
/// into the ego lane over 3 s.
pub fn cut_in() -> ScenarioConfig {
    ScenarioConfig {
        name: "cut_in".into(),
        duration_s: 12.0,
        targets: vec![TargetConfig {
            px: 3.6 + 5.0 + 2.25,
            py: 3.0,
            theta: 0.0,
            behavior: BehaviorScript::CutIn {
                v: 12.0,
                start_s: 0.0,
                duration_s: 3.0,
                target_y: -3.0,
            },
        }],
        ..Default::default()
    }
}

/// A slow vehicle ahead that speeds up hard once the ego draws level with
/// it, to avoid being overtaken.
pub fn sudden_accel() -> ScenarioConfig {
    ScenarioConfig {
        name: "sudden_accel".into(),
        duration_s: 15.0,
        targets: vec![TargetConfig {
            px: 23.6 + 2.25,
            py: -3.0,
            theta: 0.0,
            behavior: BehaviorScript::SuddenAccel {
                v: 8.0,
                trigger_gap_m: 0.0,
                accel: 6.0,
                v_max: 20.0,
            },
        }],
        ..Default::default()
    }
}

/// One lead vehicle at `lead_speed`, 20 m ahead; used by the speed sweep.
pub fn sweep_base(lead_speed: f64, mode: WeightMode) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: "sweep_base".into(),
        duration_s: 40.0,
        targets: vec![TargetConfig {
            px: 23.6 + 2.25,
            py: -3.0,
            theta: 0.0,
            behavior: BehaviorScript::ConstantSpeed { v: lead_speed },
        }],
        ..Default::default()
    };
    cfg.weights.mode = mode;
    cfg
}
