//! Scenario description: road, ego vehicle, scripted targets and planner
//! settings. Every section has defaults so a scenario file only lists what
//! differs.

use serde::{Deserialize, Serialize};

use crate::constraints::{AdaptiveWeightParams, BarrierParams, CostWeights};
use crate::dynamics::{ControlLimits, VehicleGeometry, VehicleState};
use crate::ilqr::SolverSettings;
use crate::prediction::{ControlIntervals, PredictionConfig, RlsConfig, Uncertainty};

use super::behavior::BehaviorScript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    /// Lateral position of each lane centre line.
    pub lane_centers: Vec<f64>,
    /// Index into `lane_centers` of the ego's reference lane.
    pub ego_lane: usize,
    pub y_min: f64,
    pub y_max: f64,
    /// Whether the road edges are enforced as constraints.
    pub enforce_edges: bool,
    pub v_ref: f64,
    pub waypoint_spacing: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            lane_centers: vec![-3.0, 3.0],
            ego_lane: 0,
            y_min: -6.0,
            y_max: 6.0,
            enforce_edges: true,
            v_ref: 15.0,
            waypoint_spacing: 0.5,
        }
    }
}

impl RoadConfig {
    pub fn reference_y(&self) -> f64 {
        self.lane_centers[self.ego_lane]
    }

    pub fn lane_width(&self) -> f64 {
        if self.lane_centers.len() < 2 {
            return self.y_max - self.y_min;
        }
        let mut c = self.lane_centers.clone();
        c.sort_by(f64::total_cmp);
        c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    pub px: f64,
    pub py: f64,
    pub v: f64,
    pub theta: f64,
    pub geometry: VehicleGeometry,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            px: 0.0,
            py: -3.0,
            v: 15.0,
            theta: 0.0,
            geometry: VehicleGeometry::default(),
        }
    }
}

impl EgoConfig {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.px, self.py, self.v, self.theta)
    }
}

/// A target vehicle; position is the centre of its body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub px: f64,
    pub py: f64,
    #[serde(default)]
    pub theta: f64,
    pub behavior: BehaviorScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub mode: WeightMode,
    /// Used as is in fixed mode; in adaptive mode `w_ref` and `w_vel` are
    /// replaced every tick.
    pub fixed: CostWeights,
    pub adaptive: AdaptiveWeightParams,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            mode: WeightMode::Adaptive,
            fixed: CostWeights {
                w_a: 1.0,
                w_delta: 400.0,
                w_ref: 0.6,
                w_vel: 1.0,
            },
            adaptive: AdaptiveWeightParams {
                a1: 0.30,
                a2: 9.306,
                b1: 0.294,
                b2: 0.179,
                v_floor: 0.1,
                gap_cap: 50.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub control: BarrierParams,
    pub obstacle: BarrierParams,
    /// Extra clearance added to every obstacle ellipse.
    pub r_safe: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            control: BarrierParams::CONTROL_DEFAULT,
            obstacle: BarrierParams::OBSTACLE_DEFAULT,
            r_safe: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSettings {
    /// Length of the reachability part of the horizon (s).
    pub split_s: f64,
    pub controls: ControlIntervals,
    pub steering_half_width: f64,
    pub uncertainty: Uncertainty,
    pub rls: RlsConfig,
    /// Scale of the uniform observation noise relative to `uncertainty`;
    /// zero gives exact observations.
    pub noise_scale: f64,
    /// Observations of each target's constant-velocity past fed to the
    /// predictor before the first tick.
    pub warmup_steps: usize,
}

impl Default for PredictionSettings {
    fn default() -> Self {
        Self {
            split_s: 0.5,
            controls: ControlIntervals::default(),
            steering_half_width: 0.05,
            uncertainty: Uncertainty::default(),
            rls: RlsConfig::default(),
            noise_scale: 0.0,
            warmup_steps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Half-width of the band around the lane centre that counts as keeping
    /// the lane (m).
    pub lane_band_m: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { lane_band_m: 0.75 }
    }
}

/// Lead-vehicle speeds and weighting modes for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub speeds: Vec<f64>,
    pub modes: Vec<WeightMode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            speeds: super::sweep::speed_grid(8.0, 0.1, 70),
            modes: vec![WeightMode::Fixed, WeightMode::Adaptive],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub dt: f64,
    pub horizon_steps: usize,
    pub seed: u64,
    /// Steering added to every control of the initial guess (rad). Keeps the
    /// solver from sitting on a symmetric saddle directly behind a target.
    pub steering_dither: f64,
    /// Record wall-clock solve times in the log. Off by default so that logs
    /// are reproducible byte for byte.
    pub record_timing: bool,
    pub road: RoadConfig,
    pub ego: EgoConfig,
    pub target_geometry: VehicleGeometry,
    pub targets: Vec<TargetConfig>,
    pub weights: WeightConfig,
    pub barriers: BarrierConfig,
    pub limits: ControlLimits,
    pub prediction: PredictionSettings,
    pub solver: SolverSettings,
    pub classifier: ClassifierConfig,
    pub sweep: SweepConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "empty_road".into(),
            duration_s: 10.0,
            dt: 0.1,
            horizon_steps: 40,
            seed: 0,
            steering_dither: 1e-4,
            record_timing: false,
            road: RoadConfig::default(),
            ego: EgoConfig::default(),
            target_geometry: VehicleGeometry::default(),
            targets: Vec::new(),
            weights: WeightConfig::default(),
            barriers: BarrierConfig::default(),
            limits: ControlLimits::default(),
            prediction: PredictionSettings::default(),
            solver: SolverSettings::default(),
            classifier: ClassifierConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// A configuration value that failed validation, named by its dotted key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid value for `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn check(ok: bool, key: &str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError {
            key: key.into(),
            reason: reason.into(),
        })
    }
}

impl ScenarioConfig {
    pub fn total_ticks(&self) -> usize {
        (self.duration_s / self.dt).round() as usize
    }

    pub fn prediction_config(&self) -> PredictionConfig {
        PredictionConfig {
            controls: self.prediction.controls,
            horizon_s: self.horizon_steps as f64 * self.dt,
            split_s: self.prediction.split_s,
            dt: self.dt,
            steering_half_width: self.prediction.steering_half_width,
            default_uncertainty: self.prediction.uncertainty,
            rls: self.prediction.rls,
            target_geometry: self.target_geometry,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.duration_s > 0.0 && self.duration_s.is_finite(), "duration_s", "must be positive")?;
        check(self.dt > 0.0 && self.dt <= 1.0, "dt", "must be in (0, 1]")?;
        check(self.horizon_steps > 0, "horizon_steps", "must be at least 1")?;
        check(self.steering_dither.is_finite(), "steering_dither", "must be finite")?;
        let r = &self.road;
        check(!r.lane_centers.is_empty(), "road.lane_centers", "needs at least one lane")?;
        check(r.ego_lane < r.lane_centers.len(), "road.ego_lane", "no such lane")?;
        check(r.y_min < r.y_max, "road.y_min", "must be below road.y_max")?;
        check(r.v_ref >= 0.0 && r.v_ref.is_finite(), "road.v_ref", "must be non-negative")?;
        check(r.waypoint_spacing > 0.0, "road.waypoint_spacing", "must be positive")?;
        let e = &self.ego;
        check(e.state().is_finite(), "ego", "state must be finite")?;
        check(e.v >= 0.0, "ego.v", "must be non-negative")?;
        check(e.geometry.is_valid(), "ego.geometry", "dimensions must be positive")?;
        check(self.target_geometry.is_valid(), "target_geometry", "dimensions must be positive")?;
        for (i, t) in self.targets.iter().enumerate() {
            check(
                t.px.is_finite() && t.py.is_finite() && t.theta.is_finite(),
                &format!("targets[{i}]"),
                "pose must be finite",
            )?;
            check(t.behavior.is_valid(), &format!("targets[{i}].behavior"), "inconsistent parameters")?;
        }
        let w = &self.weights;
        check(w.fixed.is_valid(), "weights.fixed", "weights must be non-negative")?;
        check(w.adaptive.is_valid(), "weights.adaptive", "a1, a2, v_floor and gap_cap must be positive")?;
        check(self.barriers.control.is_valid(), "barriers.control", "q1 and q2 must be positive")?;
        check(self.barriers.obstacle.is_valid(), "barriers.obstacle", "q1 and q2 must be positive")?;
        check(self.barriers.r_safe >= 0.0, "barriers.r_safe", "must be non-negative")?;
        let l = &self.limits;
        check(l.a_min < l.a_max, "limits.a_min", "must be below limits.a_max")?;
        check(l.delta_max > 0.0, "limits.delta_max", "must be positive")?;
        let p = &self.prediction;
        let horizon_s = self.horizon_steps as f64 * self.dt;
        check(
            p.split_s >= 0.0 && p.split_s <= horizon_s + 1e-9,
            "prediction.split_s",
            "must lie within the planning horizon",
        )?;
        check(p.controls.is_valid(), "prediction.controls", "lower bounds must not exceed upper bounds")?;
        check(p.steering_half_width >= 0.0, "prediction.steering_half_width", "must be non-negative")?;
        check(p.uncertainty.is_valid(), "prediction.uncertainty", "half-widths must be non-negative")?;
        check(p.rls.is_valid(), "prediction.rls", "lambda must be in (0, 1] and p0 positive")?;
        check((0.0..=1.0).contains(&p.noise_scale), "prediction.noise_scale", "must be in [0, 1]")?;
        check(self.solver.is_valid(), "solver", "inconsistent solver settings")?;
        check(self.classifier.lane_band_m > 0.0, "classifier.lane_band_m", "must be positive")?;
        check(
            self.sweep.speeds.iter().all(|v| v.is_finite() && *v >= 0.0),
            "sweep.speeds",
            "speeds must be non-negative",
        )?;
        Ok(())
    }
}
