//! Long-term prediction with an adaptive linear model of the target's pose.
//!
//! The pose `x = [px, py, theta]` evolves as `x_k = A x_{k-1} + c`, with the
//! parameters estimated online by exponentially weighted recursive least
//! squares. All three output rows share one regressor, so one covariance
//! matrix serves every row.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::TargetObservation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlsConfig {
    /// Forgetting factor in `(0, 1]`.
    pub lambda: f64,
    /// Initial covariance scale; the covariance starts at `p0 * I`.
    pub p0: f64,
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self { lambda: 0.95, p0: 1e3 }
    }
}

impl RlsConfig {
    pub fn is_valid(&self) -> bool {
        self.lambda > 0.0 && self.lambda <= 1.0 && self.p0 > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    /// Discrete transition matrix over one sample period.
    pub transition: Matrix3<f64>,
    pub offset: Vector3<f64>,
    /// Shared covariance over the regressor `[px, py, theta, 1]`.
    pub covariance: Matrix4<f64>,
    pub lambda: f64,
    /// Sample period of the last update, if any.
    pub sample_period: Option<f64>,
    trace_cap: f64,
}

pub(crate) fn pose(obs: &TargetObservation) -> Vector3<f64> {
    Vector3::new(obs.px, obs.py, obs.theta)
}

fn regressor(x: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(x[0], x[1], x[2], 1.0)
}

impl RlsState {
    /// Identity transition, zero offset.
    pub fn new(cfg: &RlsConfig) -> Self {
        Self {
            transition: Matrix3::identity(),
            offset: Vector3::zeros(),
            covariance: Matrix4::identity() * cfg.p0,
            lambda: cfg.lambda,
            sample_period: None,
            trace_cap: 4.0 * cfg.p0,
        }
    }

    /// Continuous-time matrix `(A - I) / dt` of the last sample period.
    pub fn continuous_matrix(&self) -> Option<Matrix3<f64>> {
        self.sample_period
            .map(|dt| (self.transition - Matrix3::identity()) / dt)
    }

    /// One-step prediction from a pose.
    pub fn predict_one(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.transition * x + self.offset
    }
}

/// Recursive least squares update with the pair of consecutive observations.
///
/// Forgetting inflates the covariance in directions the data does not excite;
/// its trace is capped at four times the initial scale to bound that growth.
pub fn rls_update(s: &RlsState, prev: &TargetObservation, curr: &TargetObservation) -> RlsState {
    debug_assert!(curr.t > prev.t, "observations must be time ordered");
    let phi = regressor(&pose(prev));
    let target = pose(curr);
    let p = &s.covariance;
    let p_phi = p * phi;
    let denom = s.lambda + phi.dot(&p_phi);
    let gain = p_phi / denom;
    let residual = target - s.predict_one(&pose(prev));

    // Row-wise parameter update: each row i gains residual_i * gain'.
    let mut params = nalgebra::Matrix3x4::zeros();
    params.fixed_view_mut::<3, 3>(0, 0).copy_from(&s.transition);
    params.set_column(3, &s.offset);
    params += residual * gain.transpose();

    let mut cov = (p - gain * p_phi.transpose()) / s.lambda;
    cov = (cov + cov.transpose()) * 0.5;
    let trace = cov.trace();
    if trace > s.trace_cap {
        cov *= s.trace_cap / trace;
    }

    RlsState {
        transition: params.fixed_view::<3, 3>(0, 0).into_owned(),
        offset: params.column(3).into_owned(),
        covariance: cov,
        lambda: s.lambda,
        sample_period: Some(curr.t - prev.t),
        trace_cap: s.trace_cap,
    }
}

/// Iterates the learned model from the current observation. When `dt`
/// differs from the filter's sample period the model is rescaled to first
/// order in time.
pub fn rls_predict(s: &RlsState, curr: &TargetObservation, n_steps: usize, dt: f64) -> Vec<Vector3<f64>> {
    let (a, c) = match s.sample_period {
        Some(period) if (period - dt).abs() > 1e-9 => {
            let k = dt / period;
            (Matrix3::identity() + (s.transition - Matrix3::identity()) * k, s.offset * k)
        }
        _ => (s.transition, s.offset),
    };
    let mut x = pose(curr);
    (0..n_steps)
        .map(|_| {
            x = a * x + c;
            x
        })
        .collect()
}

/// Exponentially weighted squared one-step error of a parameter set over a
/// history, plus the decayed prior term that the recursion minimises jointly.
pub fn weighted_loss(
    transition: &Matrix3<f64>,
    offset: &Vector3<f64>,
    history: &[TargetObservation],
    cfg: &RlsConfig,
) -> f64 {
    let n = history.len().saturating_sub(1);
    let data: f64 = history
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let e = pose(&w[1]) - (transition * pose(&w[0]) + offset);
            cfg.lambda.powi((n - 1 - i) as i32) * 0.5 * e.norm_squared()
        })
        .sum();
    let mut delta = nalgebra::Matrix3x4::zeros();
    delta.fixed_view_mut::<3, 3>(0, 0).copy_from(&(transition - Matrix3::identity()));
    delta.set_column(3, offset);
    let prior: f64 = delta.row_iter().map(|r| r.norm_squared()).sum::<f64>() / cfg.p0;
    data + cfg.lambda.powi(n as i32) * 0.5 * prior
}
