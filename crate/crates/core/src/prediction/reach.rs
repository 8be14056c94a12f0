//! Short-term reachability of a target vehicle.
//!
//! The target follows the kinematic bicycle with unknown inputs: acceleration
//! in `I_v` and steering rate in `I_delta`, both free to vary arbitrarily
//! within the step. Each step is enclosed by a first-order Taylor expansion in
//! time with an interval remainder. The remainder is bounded using a priori
//! enclosures of speed, heading and steering over the whole step, which makes
//! the result valid for any admissible input signal, not just constant ones.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use super::interval::Interval;
use super::{TargetObservation, Uncertainty};

/// Admissible speed range for the enclosure.
pub const SPEED_DOMAIN: (f64, f64) = (0.0, 40.0);
/// Largest heading-interval width accepted before a box is flagged.
pub const MAX_HEADING_WIDTH: f64 = FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlIntervals {
    /// Acceleration bounds (m/s^2).
    pub accel: [f64; 2],
    /// Steering-rate bounds (rad/s).
    pub steering_rate: [f64; 2],
}

impl Default for ControlIntervals {
    fn default() -> Self {
        Self {
            accel: [-4.0, 6.0],
            steering_rate: [-0.1, 0.1],
        }
    }
}

impl ControlIntervals {
    pub fn zero() -> Self {
        Self {
            accel: [0.0, 0.0],
            steering_rate: [0.0, 0.0],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.accel[0] <= self.accel[1] && self.steering_rate[0] <= self.steering_rate[1]
    }

    fn accel(&self) -> Interval {
        Interval::new(self.accel[0], self.accel[1])
    }

    fn steering_rate(&self) -> Interval {
        Interval::new(self.steering_rate[0], self.steering_rate[1])
    }
}

/// Interval enclosure of a target's state at one future step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachBox {
    pub step: usize,
    pub px: Interval,
    pub py: Interval,
    pub v: Interval,
    pub theta: Interval,
    /// Steering angle of the target, carried as part of the state.
    pub delta: Interval,
    /// Set when this box or one of its predecessors left the valid domain.
    pub degenerate: bool,
}

impl ReachBox {
    pub fn contains(&self, px: f64, py: f64, v: f64, theta: f64) -> bool {
        self.px.contains(px) && self.py.contains(py) && self.v.contains(v) && self.theta.contains(theta)
    }

    pub fn is_well_formed(&self) -> bool {
        [self.px, self.py, self.v, self.theta, self.delta]
            .iter()
            .all(|i| i.lo <= i.hi && i.lo.is_finite() && i.hi.is_finite())
    }

    /// Step-0 box around an observation.
    pub fn seed(obs: &TargetObservation, unc: &Uncertainty, steering_half_width: f64) -> Self {
        Self {
            step: 0,
            px: Interval::around(obs.px, unc.px),
            py: Interval::around(obs.py, unc.py),
            v: Interval::around(obs.v, unc.v),
            theta: Interval::around(obs.theta, unc.theta),
            delta: Interval::around(0.0, steering_half_width),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachError {
    /// The enclosure left the valid domain. `clamped` is the box projected back
    /// onto it, for callers that continue with a flagged prediction.
    #[error("reach box at step {} left the valid domain", clamped.step)]
    DomainExceeded { clamped: ReachBox },
    #[error("step length must be in (0, 0.1] s, got {0}")]
    InvalidStep(f64),
}

/// Encloses all states reachable from `b` after `dt` seconds.
pub fn reach_step(b: &ReachBox, ctrl: &ControlIntervals, dt: f64, wheelbase: f64) -> Result<ReachBox, ReachError> {
    if !(dt > 0.0 && dt <= 0.1 + 1e-12) {
        return Err(ReachError::InvalidStep(dt));
    }
    let t = Interval::new(0.0, dt);
    let accel = ctrl.accel();
    let rate = ctrl.steering_rate();

    // A priori enclosures over the whole step.
    let v_all = b.v + t * accel;
    let delta_all = b.delta + t * rate;
    let kappa_all = delta_all.tan() * (1.0 / wheelbase);
    let yaw_rate_all = v_all * kappa_all;
    let theta_all = b.theta + t * yaw_rate_all;
    let (cos_all, sin_all) = (theta_all.cos(), theta_all.sin());

    // d/dt (v cos theta) and d/dt (v sin theta) over the step.
    let dvx = accel * cos_all - v_all * sin_all * yaw_rate_all;
    let dvy = accel * sin_all + v_all * cos_all * yaw_rate_all;
    let half_dt2 = Interval::new(0.0, 0.5 * dt * dt);

    let px = b.px + (b.v * b.theta.cos()) * dt + half_dt2 * dvx;
    let py = b.py + (b.v * b.theta.sin()) * dt + half_dt2 * dvy;
    let v = b.v + accel * dt;
    let theta = b.theta + yaw_rate_all * dt;
    let delta = b.delta + rate * dt;

    let next = ReachBox {
        step: b.step + 1,
        px,
        py,
        v,
        theta,
        delta,
        degenerate: b.degenerate,
    };
    let speed_ok = v.lo >= SPEED_DOMAIN.0 && v.hi <= SPEED_DOMAIN.1;
    let heading_ok = theta.width() <= MAX_HEADING_WIDTH;
    let steering_ok = delta.lo > -FRAC_PI_2 * 0.9 && delta.hi < FRAC_PI_2 * 0.9;
    if speed_ok && heading_ok && steering_ok {
        Ok(next)
    } else {
        let max_delta = FRAC_PI_2 * 0.9;
        Err(ReachError::DomainExceeded {
            clamped: ReachBox {
                v: v.clamp(SPEED_DOMAIN.0, SPEED_DOMAIN.1),
                delta: delta.clamp(-max_delta, max_delta),
                degenerate: true,
                ..next
            },
        })
    }
}

/// Boxes for steps `1..=n_steps` after an observation. Boxes that left the
/// domain are clamped, flagged and propagation continues from them.
pub fn reach_horizon(
    obs: &TargetObservation,
    unc: &Uncertainty,
    steering_half_width: f64,
    ctrl: &ControlIntervals,
    n_steps: usize,
    dt: f64,
    wheelbase: f64,
) -> Result<Vec<ReachBox>, ReachError> {
    let mut current = ReachBox::seed(obs, unc, steering_half_width);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        current = match reach_step(&current, ctrl, dt, wheelbase) {
            Ok(b) => b,
            Err(ReachError::DomainExceeded { clamped }) => clamped,
            Err(e) => return Err(e),
        };
        out.push(current);
    }
    Ok(out)
}
