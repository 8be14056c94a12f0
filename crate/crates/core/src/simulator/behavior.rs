//! Scripted motion of target vehicles.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;

/// Quintic with zero velocity and acceleration at both ends, moving from `y0`
/// at `t = 0` to `y1` at `t = duration`. Returns position, velocity and
/// acceleration; `t` is clamped to `[0, duration]`.
pub fn quintic_lateral(t: f64, duration: f64, y0: f64, y1: f64) -> (f64, f64, f64) {
    let s = (t / duration).clamp(0.0, 1.0);
    let dy = y1 - y0;
    let (s2, s3) = (s * s, s * s * s);
    let p = 10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2;
    let dp = 30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2;
    let ddp = 60.0 * s - 180.0 * s2 + 120.0 * s3;
    (y0 + dy * p, dy * dp / duration, dy * ddp / (duration * duration))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorScript {
    /// Constant speed along the initial heading.
    ConstantSpeed { v: f64 },
    /// Constant longitudinal speed with a quintic lane change to `target_y`
    /// starting at `start_s` and lasting `duration_s`.
    CutIn {
        v: f64,
        start_s: f64,
        duration_s: f64,
        target_y: f64,
    },
    /// Cruises at `v` until the ego's front bumper is no more than
    /// `trigger_gap_m` behind the target's front bumper, then accelerates at
    /// `accel` up to `v_max`.
    SuddenAccel {
        v: f64,
        trigger_gap_m: f64,
        accel: f64,
        v_max: f64,
    },
}

impl BehaviorScript {
    pub fn is_valid(&self) -> bool {
        match *self {
            BehaviorScript::ConstantSpeed { v } => v.is_finite() && v >= 0.0,
            BehaviorScript::CutIn { v, start_s, duration_s, target_y } => {
                v >= 0.0 && start_s >= 0.0 && duration_s > 0.0 && target_y.is_finite()
            }
            BehaviorScript::SuddenAccel { v, trigger_gap_m, accel, v_max } => {
                v >= 0.0 && trigger_gap_m.is_finite() && accel > 0.0 && v_max >= v
            }
        }
    }

    pub fn initial_speed(&self) -> f64 {
        match *self {
            BehaviorScript::ConstantSpeed { v }
            | BehaviorScript::CutIn { v, .. }
            | BehaviorScript::SuddenAccel { v, .. } => v,
        }
    }
}

/// A target vehicle being driven by its script. The state is referenced to
/// the centre of the body.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTarget {
    pub state: VehicleState,
    pub script: BehaviorScript,
    start: VehicleState,
    triggered: bool,
}

impl ScriptedTarget {
    pub fn new(initial: VehicleState, script: BehaviorScript) -> Self {
        let state = VehicleState {
            v: script.initial_speed(),
            ..initial
        };
        Self {
            state,
            script,
            start: state,
            triggered: false,
        }
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    /// Advances from time `t` to `t + dt`. `ego_front_x` is the ego's front
    /// bumper position, used by trigger conditions.
    pub fn advance(&mut self, t: f64, dt: f64, ego_front_x: f64, target_length: f64) {
        let s = &mut self.state;
        match self.script {
            BehaviorScript::ConstantSpeed { v } => {
                s.v = v;
                s.px += v * dt * s.theta.cos();
                s.py += v * dt * s.theta.sin();
            }
            BehaviorScript::CutIn { v, start_s, duration_s, target_y } => {
                let heading = self.start.theta;
                s.px += v * dt * heading.cos();
                let (y, vy, _) = quintic_lateral(t + dt - start_s, duration_s, self.start.py, target_y);
                s.py = y;
                s.v = (v * v + vy * vy).sqrt();
                s.theta = heading + vy.atan2(v);
            }
            BehaviorScript::SuddenAccel { trigger_gap_m, accel, v_max, .. } => {
                if !self.triggered && s.px + 0.5 * target_length - ego_front_x <= trigger_gap_m {
                    self.triggered = true;
                }
                let a = if self.triggered && s.v < v_max { accel } else { 0.0 };
                let v_next = (s.v + a * dt).min(v_max);
                let dist = 0.5 * (s.v + v_next) * dt;
                s.px += dist * s.theta.cos();
                s.py += dist * s.theta.sin();
                s.v = v_next;
            }
        }
    }
}
