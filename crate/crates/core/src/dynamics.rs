//! Kinematic bicycle model.
//!
//! The state is referenced to the middle of the rear axle. Integration over one
//! step is exact for constant acceleration and steering: the vehicle follows a
//! circular arc of curvature `tan(delta) / L` for a travelled distance
//! `l = v dt + a dt^2 / 2`. Below a curvature threshold the straight-line update
//! is used instead.

use nalgebra::{Matrix4, Matrix4x2, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

/// Curvature magnitude below which the straight-line update is used.
pub const KAPPA_EPS: f64 = 1e-6;

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;

/// Planar pose and speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub px: f64,
    pub py: f64,
    pub v: f64,
    /// Heading in radians. Never wrapped.
    pub theta: f64,
}

impl VehicleState {
    pub fn new(px: f64, py: f64, v: f64, theta: f64) -> Self {
        Self { px, py, v, theta }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.px, self.py, self.v, self.theta)
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }
}

/// Acceleration (m/s^2) and front-wheel steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub delta: f64,
}

impl ControlInput {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.a, self.delta)
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        Self::new(u[0], u[1])
    }
}

/// Physical actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub a_min: f64,
    pub a_max: f64,
    pub delta_max: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            a_min: -4.0,
            a_max: 6.0,
            delta_max: 30f64.to_radians(),
        }
    }
}

impl ControlLimits {
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            a: u.a.clamp(self.a_min, self.a_max),
            delta: u.delta.clamp(-self.delta_max, self.delta_max),
        }
    }
}

/// Vehicle dimensions. The ego footprint is covered by two circles of
/// `circle_radius`, centred on the rear and front axles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub body_length: f64,
    pub body_width: f64,
    pub circle_radius: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            body_length: 4.5,
            body_width: 2.0,
            circle_radius: 1.2,
        }
    }
}

impl VehicleGeometry {
    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0
            && self.body_length > 0.0
            && self.body_width > 0.0
            && self.circle_radius >= self.body_width / 2.0
    }

    /// Centres of the rear and front footprint circles.
    pub fn circle_centers(&self, x: &VehicleState) -> [(f64, f64); 2] {
        let (s, c) = x.theta.sin_cos();
        [
            (x.px, x.py),
            (x.px + self.wheelbase * c, x.py + self.wheelbase * s),
        ]
    }
}

/// Jacobian of one transition, split into the state block `a` and control
/// block `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedStep {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
}

impl LinearizedStep {
    /// The full 4x6 state-control Jacobian.
    pub fn jacobian(&self) -> SMatrix<f64, 4, 6> {
        let mut f = SMatrix::<f64, 4, 6>::zeros();
        f.fixed_view_mut::<4, 4>(0, 0).copy_from(&self.a);
        f.fixed_view_mut::<4, 2>(0, 4).copy_from(&self.b);
        f
    }
}

fn travel_distance(v: f64, a: f64, dt: f64) -> f64 {
    v * dt + 0.5 * a * dt * dt
}

// sin(h)/h and its derivative, with series near zero.
fn sinc(h: f64) -> f64 {
    if h.abs() < 1e-4 {
        1.0 - h * h / 6.0
    } else {
        h.sin() / h
    }
}

fn sinc_prime(h: f64) -> f64 {
    if h.abs() < 1e-3 {
        -h / 3.0 + h * h * h / 30.0
    } else {
        (h * h.cos() - h.sin()) / (h * h)
    }
}

pub(crate) fn arc_step(x: &VehicleState, u: &ControlInput, dt: f64, kappa: f64) -> VehicleState {
    let l = travel_distance(x.v, u.a, dt);
    // (sin(theta + kappa l) - sin(theta)) / kappa, written via the half-angle
    // so it stays accurate for small curvature.
    let h = 0.5 * kappa * l;
    let chord = l * sinc(h);
    let mid = x.theta + h;
    VehicleState {
        px: x.px + chord * mid.cos(),
        py: x.py + chord * mid.sin(),
        v: x.v + u.a * dt,
        theta: x.theta + kappa * l,
    }
}

/// Chord of length `l` at the mid-step heading. Matches the arc to within
/// `l^3 kappa^2 / 24`, which is far below rounding for `|kappa| <= KAPPA_EPS`.
pub(crate) fn straight_step(x: &VehicleState, u: &ControlInput, dt: f64, kappa: f64) -> VehicleState {
    let l = travel_distance(x.v, u.a, dt);
    let mid = x.theta + 0.5 * kappa * l;
    VehicleState {
        px: x.px + l * mid.cos(),
        py: x.py + l * mid.sin(),
        v: x.v + u.a * dt,
        theta: x.theta + kappa * l,
    }
}

/// Exact discrete transition under constant control over `dt`.
pub fn step(x: &VehicleState, u: &ControlInput, dt: f64, geom: &VehicleGeometry) -> VehicleState {
    let kappa = u.delta.tan() / geom.wheelbase;
    if kappa.abs() > KAPPA_EPS {
        arc_step(x, u, dt, kappa)
    } else {
        straight_step(x, u, dt, kappa)
    }
}

/// Analytic Jacobian of [`step`].
///
/// The half-angle form of the arc update is smooth through zero curvature, so
/// the same expressions are used on both sides of the branch; at `kappa = 0`
/// they reduce to the limit of the arc derivatives.
pub fn linearize(
    x: &VehicleState,
    u: &ControlInput,
    dt: f64,
    geom: &VehicleGeometry,
) -> LinearizedStep {
    let l = travel_distance(x.v, u.a, dt);
    let kappa = u.delta.tan() / geom.wheelbase;
    let dkappa_ddelta = 1.0 / (u.delta.cos().powi(2) * geom.wheelbase);
    let h = 0.5 * kappa * l;
    let s = sinc(h);
    let sp = sinc_prime(h);
    let (sin_mid, cos_mid) = (x.theta + h).sin_cos();
    let (sin_end, cos_end) = (x.theta + kappa * l).sin_cos();

    let dl_dv = dt;
    let dl_da = 0.5 * dt * dt;

    // Derivatives of the position increment with respect to distance, heading
    // and curvature.
    let dpx_dl = cos_end;
    let dpy_dl = sin_end;
    let dpx_dth = -l * s * sin_mid;
    let dpy_dth = l * s * cos_mid;
    let dpx_dk = 0.5 * l * l * (-sin_mid * s + cos_mid * sp);
    let dpy_dk = 0.5 * l * l * (cos_mid * s + sin_mid * sp);

    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, dpx_dl * dl_dv, dpx_dth,
        0.0, 1.0, dpy_dl * dl_dv, dpy_dth,
        0.0, 0.0, 1.0,            0.0,
        0.0, 0.0, kappa * dl_dv,  1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        dpx_dl * dl_da, dpx_dk * dkappa_ddelta,
        dpy_dl * dl_da, dpy_dk * dkappa_ddelta,
        dt,             0.0,
        kappa * dl_da,  l * dkappa_ddelta,
    );
    LinearizedStep { a, b }
}
