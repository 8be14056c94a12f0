//! Two-stage prediction of target vehicles.
//!
//! The first `split` seconds of the horizon come from interval reachability,
//! which encloses every kinematically admissible motion of the target. The
//! remainder comes from a recursive least squares model that extrapolates the
//! observed motion without uncertainty. Both are turned into ellipses, one per
//! planning step.

pub mod interval;
pub mod reach;
pub mod rls;

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::constraints::EllipseObstacle;
use crate::dynamics::VehicleGeometry;
use interval::Interval;

pub use reach::{reach_horizon, reach_step, ControlIntervals, ReachBox, ReachError};
pub use rls::{rls_predict, rls_update, RlsConfig, RlsState};

/// Half-widths of the perception uncertainty on an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
}

impl Default for Uncertainty {
    fn default() -> Self {
        Self {
            px: 0.2,
            py: 0.2,
            theta: 0.05,
            v: 0.5,
        }
    }
}

impl Uncertainty {
    pub fn zero() -> Self {
        Self {
            px: 0.0,
            py: 0.0,
            theta: 0.0,
            v: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.px, self.py, self.theta, self.v].iter().all(|w| w.is_finite() && *w >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetObservation {
    /// Timestamp (s).
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
    pub uncertainty: Option<Uncertainty>,
}

/// Circumscribing ellipse of the area a target may occupy given a reach box.
///
/// The box's position extent is expressed in the frame of the mid heading and
/// grown by the body rectangle swept over the heading interval. The ellipse
/// through the corners of that rectangle with the same aspect ratio (axes
/// scaled by sqrt 2) is the minimum-area one containing it. The ego footprint
/// is added later by the constraint.
pub fn inflate_box_to_ellipse(b: &ReachBox, target: &VehicleGeometry) -> EllipseObstacle {
    let heading = b.theta.mid();
    let sweep = (0.5 * b.theta.width()).min(FRAC_PI_2);
    let (hx, hy) = (0.5 * b.px.width(), 0.5 * b.py.width());
    let (s, c) = heading.sin_cos();
    let (s, c) = (s.abs(), c.abs());
    let half_len = 0.5 * target.body_length;
    let half_wid = 0.5 * target.body_width;
    let along = hx * c + hy * s + half_len + half_wid * sweep.sin();
    let across = hx * s + hy * c + half_len * sweep.sin() + half_wid;
    let (semi_major, semi_minor, heading) = if along >= across {
        (SQRT_2 * along, SQRT_2 * across, heading)
    } else {
        (SQRT_2 * across, SQRT_2 * along, heading + FRAC_PI_2)
    };
    EllipseObstacle {
        center: [b.px.mid(), b.py.mid()],
        heading,
        semi_major,
        semi_minor,
        active_step: b.step,
    }
}

/// Ellipse of a predicted point pose with no uncertainty.
pub fn point_ellipse(px: f64, py: f64, theta: f64, step: usize, target: &VehicleGeometry) -> EllipseObstacle {
    let b = ReachBox {
        step,
        px: Interval::point(px),
        py: Interval::point(py),
        v: Interval::point(0.0),
        theta: Interval::point(theta),
        delta: Interval::point(0.0),
        degenerate: false,
    };
    inflate_box_to_ellipse(&b, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub controls: ControlIntervals,
    pub horizon_s: f64,
    /// Length of the reachability part of the horizon.
    pub split_s: f64,
    pub dt: f64,
    /// Half-width of the target's initial steering interval (rad).
    pub steering_half_width: f64,
    /// Used when an observation carries no uncertainty of its own.
    pub default_uncertainty: Uncertainty,
    pub rls: RlsConfig,
    pub target_geometry: VehicleGeometry,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            controls: ControlIntervals::default(),
            horizon_s: 4.0,
            split_s: 0.5,
            dt: 0.1,
            steering_half_width: 0.05,
            default_uncertainty: Uncertainty::default(),
            rls: RlsConfig::default(),
            target_geometry: VehicleGeometry::default(),
        }
    }
}

impl PredictionConfig {
    pub fn total_steps(&self) -> usize {
        (self.horizon_s / self.dt).round() as usize
    }

    pub fn short_steps(&self) -> usize {
        ((self.split_s / self.dt).round() as usize).min(self.total_steps())
    }
}

/// Ellipses for planning steps `1..=N` plus the reachability flags.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrediction {
    pub obstacles: Vec<EllipseObstacle>,
    pub boxes: Vec<ReachBox>,
    /// True when any reach box left the valid domain.
    pub degenerate: bool,
}

/// Online predictor for one target: keeps the last observation and the RLS
/// state.
#[derive(Debug, Clone)]
pub struct TargetPredictor {
    rls: RlsState,
    last: Option<TargetObservation>,
    observations: usize,
}

impl TargetPredictor {
    pub fn new(cfg: &RlsConfig) -> Self {
        Self {
            rls: RlsState::new(cfg),
            last: None,
            observations: 0,
        }
    }

    pub fn rls(&self) -> &RlsState {
        &self.rls
    }

    pub fn last_observation(&self) -> Option<&TargetObservation> {
        self.last.as_ref()
    }

    pub fn observe(&mut self, obs: TargetObservation) {
        if let Some(prev) = &self.last {
            self.rls = rls_update(&self.rls, prev, &obs);
        }
        self.last = Some(obs);
        self.observations += 1;
    }

    pub fn predict(&self, cfg: &PredictionConfig) -> Option<HybridPrediction> {
        let obs = self.last.as_ref()?;
        let n_total = cfg.total_steps();
        let n_short = cfg.short_steps();
        let unc = obs.uncertainty.unwrap_or(cfg.default_uncertainty);
        let mut boxes = Vec::new();
        let mut step_dt = cfg.dt;
        let mut substeps = 1;
        while step_dt > 0.1 + 1e-12 {
            substeps *= 2;
            step_dt = cfg.dt / substeps as f64;
        }
        if n_short > 0 {
            let fine = reach_horizon(
                obs,
                &unc,
                cfg.steering_half_width,
                &cfg.controls,
                n_short * substeps,
                step_dt,
                cfg.target_geometry.wheelbase,
            )
            .expect("step length checked above");
            boxes = fine
                .into_iter()
                .skip(substeps - 1)
                .step_by(substeps)
                .enumerate()
                .map(|(i, b)| ReachBox { step: i + 1, ..b })
                .collect();
        }
        let degenerate = boxes.iter().any(|b| b.degenerate);
        let mut obstacles: Vec<EllipseObstacle> = boxes
            .iter()
            .map(|b| inflate_box_to_ellipse(b, &cfg.target_geometry))
            .collect();
        if n_total > n_short {
            let poses = rls_predict(&self.rls, obs, n_total, cfg.dt);
            obstacles.extend(
                poses
                    .iter()
                    .enumerate()
                    .skip(n_short)
                    .map(|(i, p)| point_ellipse(p[0], p[1], p[2], i + 1, &cfg.target_geometry)),
            );
        }
        Some(HybridPrediction {
            obstacles,
            boxes,
            degenerate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictionError {
    #[error("hybrid prediction needs at least two observations, got {0}")]
    InsufficientHistory(usize),
}

/// Replays an observation history through a fresh predictor and predicts from
/// the last observation.
pub fn predict_hybrid(history: &[TargetObservation], cfg: &PredictionConfig) -> Result<HybridPrediction, PredictionError> {
    if history.len() < 2 {
        return Err(PredictionError::InsufficientHistory(history.len()));
    }
    let mut p = TargetPredictor::new(&cfg.rls);
    for o in history {
        p.observe(*o);
    }
    Ok(p.predict(cfg).expect("history is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_box(theta: f64) -> ReachBox {
        ReachBox {
            step: 1,
            px: Interval::point(10.0),
            py: Interval::point(-3.0),
            v: Interval::point(8.0),
            theta: Interval::point(theta),
            delta: Interval::point(0.0),
            degenerate: false,
        }
    }

    #[test]
    fn point_box_gives_footprint_ellipse() {
        let e = inflate_box_to_ellipse(&point_box(0.0), &VehicleGeometry::default());
        assert!((e.semi_major - 3.181981).abs() < 1e-6);
        assert!((e.semi_minor - 1.414214).abs() < 1e-6);
        assert_eq!(e.center, [10.0, -3.0]);
        assert_eq!(e.active_step, 1);
    }

    #[test]
    fn position_width_grows_major_axis() {
        let mut b = point_box(0.0);
        b.px = Interval::new(9.5, 10.5);
        let e = inflate_box_to_ellipse(&b, &VehicleGeometry::default());
        assert!((e.semi_major - (3.181981 + SQRT_2 * 0.5)).abs() < 1e-6);
    }

    #[test]
    fn wide_lateral_box_swaps_axes() {
        let mut b = point_box(0.0);
        b.py = Interval::new(-10.0, 10.0);
        let e = inflate_box_to_ellipse(&b, &VehicleGeometry::default());
        assert!(e.is_valid());
        assert!((e.heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn hybrid_needs_history() {
        let o = TargetObservation {
            t: 0.0,
            px: 0.0,
            py: 0.0,
            theta: 0.0,
            v: 0.0,
            uncertainty: None,
        };
        assert_eq!(
            predict_hybrid(&[o], &PredictionConfig::default()),
            Err(PredictionError::InsufficientHistory(1))
        );
    }
}
