//! Stage cost of the planner: control effort, reference and velocity
//! tracking, and inequality constraints wrapped in exponential barriers.
//!
//! All constraints use the convention `g <= 0` for feasibility. A barrier
//! `q1 * exp(q2 * g)` turns each into a smooth penalty whose derivatives follow
//! from those of `g` by the chain rule.

use nalgebra::{Matrix2, Matrix4, Matrix6, Vector2, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, ControlLimits, VehicleGeometry, VehicleState};
use crate::ilqr::{CostModel, QuadraticCostTerm};

/// Upper bound on any single barrier value.
pub const BARRIER_CEILING: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_a: f64,
    pub w_delta: f64,
    pub w_ref: f64,
    pub w_vel: f64,
}

impl CostWeights {
    pub fn is_valid(&self) -> bool {
        [self.w_a, self.w_delta, self.w_ref, self.w_vel]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub q1: f64,
    pub q2: f64,
}

impl BarrierParams {
    pub const CONTROL_DEFAULT: Self = Self { q1: 1.0, q2: 5.0 };
    pub const OBSTACLE_DEFAULT: Self = Self { q1: 2.0, q2: 10.0 };

    pub fn is_valid(&self) -> bool {
        self.q1 > 0.0 && self.q2 > 0.0
    }
}

/// Value and first two derivatives of the barrier with respect to `g`.
fn barrier_with_derivatives(g: f64, p: &BarrierParams) -> (f64, f64, f64) {
    let g_ceiling = (BARRIER_CEILING / p.q1).ln() / p.q2;
    let b = if g >= g_ceiling {
        BARRIER_CEILING
    } else {
        p.q1 * (p.q2 * g).exp()
    };
    (b, p.q2 * b, p.q2 * p.q2 * b)
}

/// `q1 * exp(q2 * g)`, saturated at [`BARRIER_CEILING`].
pub fn barrier(g: f64, p: &BarrierParams) -> f64 {
    barrier_with_derivatives(g, p).0
}

/// A scalar constraint and its derivatives over the stacked `[x; u]` vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintEval {
    pub g: f64,
    pub grad: Vector6<f64>,
    pub hess: Matrix6<f64>,
}

/// Constraint on the state only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateConstraint {
    pub g: f64,
    pub grad: Vector4<f64>,
    pub hess: Matrix4<f64>,
}

/// Constraint on the control only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConstraint {
    pub g: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

impl From<StateConstraint> for ConstraintEval {
    fn from(c: StateConstraint) -> Self {
        let mut grad = Vector6::zeros();
        grad.fixed_rows_mut::<4>(0).copy_from(&c.grad);
        let mut hess = Matrix6::zeros();
        hess.fixed_view_mut::<4, 4>(0, 0).copy_from(&c.hess);
        Self { g: c.g, grad, hess }
    }
}

impl From<ControlConstraint> for ConstraintEval {
    fn from(c: ControlConstraint) -> Self {
        let mut grad = Vector6::zeros();
        grad.fixed_rows_mut::<2>(4).copy_from(&c.grad);
        let mut hess = Matrix6::zeros();
        hess.fixed_view_mut::<2, 2>(4, 4).copy_from(&c.hess);
        Self { g: c.g, grad, hess }
    }
}

/// Second-order expansion of `barrier(g(z))`.
pub fn quadratize_barrier(c: &ConstraintEval, p: &BarrierParams) -> QuadraticCostTerm {
    let (b, db, d2b) = barrier_with_derivatives(c.g, p);
    let mut term = QuadraticCostTerm {
        h: c.grad * c.grad.transpose() * d2b + c.hess * db,
        g: c.grad * db,
        c: b,
    };
    term.symmetrize();
    term
}

/// Rotated ellipse occupied by an obstacle at one planning step. The semi-axes
/// describe the obstacle alone; the ego footprint radius is added when the
/// constraint is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseObstacle {
    pub center: [f64; 2],
    pub heading: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub active_step: usize,
}

impl EllipseObstacle {
    pub fn is_valid(&self) -> bool {
        self.semi_major >= self.semi_minor && self.semi_minor > 0.0 && self.center.iter().all(|c| c.is_finite())
    }

    /// Shape matrix `R diag(1/a^2, 1/b^2) R'` after growing both axes by
    /// `margin`.
    pub fn shape_matrix(&self, margin: f64) -> Matrix2<f64> {
        let a = self.semi_major + margin;
        let b = self.semi_minor + margin;
        let (s, c) = self.heading.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        r * Matrix2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b)) * r.transpose()
    }

    /// `1 - d' A d` for a point, with axes grown by `margin`.
    pub fn point_constraint(&self, p: [f64; 2], margin: f64) -> f64 {
        let d = Vector2::new(p[0] - self.center[0], p[1] - self.center[1]);
        1.0 - d.dot(&(self.shape_matrix(margin) * d))
    }
}

/// Ellipse constraint for each of the two ego circles (rear axle, then front
/// axle). The obstacle's semi-axes are grown by `geom.circle_radius + r_safe`.
pub fn ellipse_constraint(
    x: &VehicleState,
    geom: &VehicleGeometry,
    obs: &EllipseObstacle,
    r_safe: f64,
) -> [StateConstraint; 2] {
    let shape = obs.shape_matrix(geom.circle_radius + r_safe);
    let (s, c) = x.theta.sin_cos();
    let centers = geom.circle_centers(x);
    let mut out = [StateConstraint {
        g: 0.0,
        grad: Vector4::zeros(),
        hess: Matrix4::zeros(),
    }; 2];
    for (k, (cx, cy)) in centers.into_iter().enumerate() {
        let offset = if k == 0 { 0.0 } else { geom.wheelbase };
        let d = Vector2::new(cx - obs.center[0], cy - obs.center[1]);
        let ad = shape * d;
        let g = 1.0 - d.dot(&ad);
        // Gradient and Hessian of g with respect to the circle centre.
        let gc = -2.0 * ad;
        let hc = -2.0 * shape;
        // Circle centre as a function of the state: (px, py) + offset (cos, sin).
        #[rustfmt::skip]
        let jac = nalgebra::Matrix2x4::new(
            1.0, 0.0, 0.0, -offset * s,
            0.0, 1.0, 0.0,  offset * c,
        );
        let grad = jac.transpose() * gc;
        let mut hess = jac.transpose() * hc * jac;
        hess[(3, 3)] += gc[0] * (-offset * c) + gc[1] * (-offset * s);
        out[k] = StateConstraint { g, grad, hess };
    }
    out
}

/// The four actuator limits in `g <= 0` form: upper and lower acceleration,
/// upper and lower steering.
pub fn control_limit_constraints(u: &ControlInput, limits: &ControlLimits) -> [ControlConstraint; 4] {
    let lin = |g: f64, da: f64, dd: f64| ControlConstraint {
        g,
        grad: Vector2::new(da, dd),
        hess: Matrix2::zeros(),
    };
    [
        lin(u.a - limits.a_max, 1.0, 0.0),
        lin(limits.a_min - u.a, -1.0, 0.0),
        lin(u.delta - limits.delta_max, 0.0, 1.0),
        lin(-limits.delta_max - u.delta, 0.0, -1.0),
    ]
}

/// Lateral road edges; each ego circle must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadBounds {
    pub y_min: f64,
    pub y_max: f64,
}

/// Road-edge constraints for both ego circles: upper edge then lower edge per
/// circle.
pub fn road_constraints(x: &VehicleState, geom: &VehicleGeometry, road: &RoadBounds) -> [StateConstraint; 4] {
    let (s, c) = x.theta.sin_cos();
    let mut out = [StateConstraint {
        g: 0.0,
        grad: Vector4::zeros(),
        hess: Matrix4::zeros(),
    }; 4];
    for (k, (_, cy)) in geom.circle_centers(x).into_iter().enumerate() {
        let offset = if k == 0 { 0.0 } else { geom.wheelbase };
        let grad = Vector4::new(0.0, 1.0, 0.0, offset * c);
        let mut hess = Matrix4::zeros();
        hess[(3, 3)] = -offset * s;
        out[2 * k] = StateConstraint {
            g: cy + geom.circle_radius - road.y_max,
            grad,
            hess,
        };
        out[2 * k + 1] = StateConstraint {
            g: road.y_min - (cy - geom.circle_radius),
            grad: -grad,
            hess: -hess,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWeightParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    /// Lower clamp on the target speed.
    pub v_floor: f64,
    /// Upper clamp on the gap, also used when no target leads.
    pub gap_cap: f64,
}

impl AdaptiveWeightParams {
    pub fn is_valid(&self) -> bool {
        self.a1 > 0.0 && self.a2 > 0.0 && self.v_floor > 0.0 && self.gap_cap > 0.0
    }
}

/// Reference and velocity weights from the lead target's speed and the
/// longitudinal gap to it:
/// `w_ref = a1 / v * exp(b1 * gap)`, `w_vel = v / (a2 * exp(b2 * gap))`.
pub fn adaptive_weights(v_tgt: f64, delta_x: f64, p: &AdaptiveWeightParams) -> (f64, f64) {
    let v = v_tgt.max(p.v_floor);
    let gap = delta_x.clamp(0.0, p.gap_cap);
    let w_ref = p.a1 / v * (p.b1 * gap).exp();
    let w_vel = v / (p.a2 * (p.b2 * gap).exp());
    (w_ref, w_vel)
}

/// Weights used when no target leads the ego vehicle.
pub fn baseline_weights(v_ref: f64, p: &AdaptiveWeightParams) -> (f64, f64) {
    adaptive_weights(v_ref, p.gap_cap, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub v_ref: f64,
}

/// Closest point on the reference with its local direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub x: f64,
    pub y: f64,
    pub v_ref: f64,
    /// Unit tangent of the segment the point lies on, or `None` when the
    /// closest point is a vertex.
    pub tangent: Option<[f64; 2]>,
    pub index: usize,
}

const CHUNK: usize = 32;

/// Polyline reference with per-waypoint speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<Waypoint>,
    // Bounding boxes of consecutive chunks of waypoints, for pruning.
    chunks: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReferenceError {
    #[error("reference needs at least two waypoints")]
    TooShort,
    #[error("waypoints {0} and {1} coincide")]
    Duplicate(usize, usize),
}

impl ReferencePath {
    pub fn new(points: Vec<Waypoint>) -> Result<Self, ReferenceError> {
        if points.len() < 2 {
            return Err(ReferenceError::TooShort);
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[0].x == w[1].x && w[0].y == w[1].y {
                return Err(ReferenceError::Duplicate(i, i + 1));
            }
        }
        let chunks = points
            .chunks(CHUNK)
            .map(|c| {
                c.iter().fold(
                    [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                    |b, p| [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)],
                )
            })
            .collect();
        Ok(Self { points, chunks })
    }

    /// Straight line along +x at height `y`, sampled every `spacing` metres.
    pub fn straight(x0: f64, x1: f64, y: f64, spacing: f64, v_ref: f64) -> Self {
        let n = ((x1 - x0) / spacing).ceil().max(1.0) as usize;
        let points = (0..=n)
            .map(|i| Waypoint {
                x: x0 + (x1 - x0) * i as f64 / n as f64,
                y,
                v_ref,
            })
            .collect();
        Self::new(points).expect("straight reference is well formed")
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    /// Nearest waypoint by Euclidean distance; ties go to the larger index.
    pub fn nearest_waypoint(&self, px: f64, py: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (ci, bb) in self.chunks.iter().enumerate() {
            let dx = (bb[0] - px).max(px - bb[2]).max(0.0);
            let dy = (bb[1] - py).max(py - bb[3]).max(0.0);
            if dx * dx + dy * dy > best.0 {
                continue;
            }
            let start = ci * CHUNK;
            for (j, p) in self.points[start..(start + CHUNK).min(self.points.len())].iter().enumerate() {
                let d = (p.x - px).powi(2) + (p.y - py).powi(2);
                if d <= best.0 {
                    best = (d, start + j);
                }
            }
        }
        best.1
    }

    /// Closest point on the two segments adjacent to the nearest waypoint.
    pub fn closest(&self, px: f64, py: f64) -> ReferencePoint {
        let i = self.nearest_waypoint(px, py);
        let w = self.points[i];
        let mut best = ReferencePoint {
            x: w.x,
            y: w.y,
            v_ref: w.v_ref,
            tangent: None,
            index: i,
        };
        let mut best_d = (w.x - px).powi(2) + (w.y - py).powi(2);
        for (s, e) in [(i.wrapping_sub(1), i), (i, i + 1)] {
            if s >= self.points.len() || e >= self.points.len() {
                continue;
            }
            let (p0, p1) = (self.points[s], self.points[e]);
            let (tx, ty) = (p1.x - p0.x, p1.y - p0.y);
            let len = (tx * tx + ty * ty).sqrt();
            let (ux, uy) = (tx / len, ty / len);
            let along = (px - p0.x) * ux + (py - p0.y) * uy;
            if along <= 0.0 || along >= len {
                continue;
            }
            let (qx, qy) = (p0.x + along * ux, p0.y + along * uy);
            let d = (qx - px).powi(2) + (qy - py).powi(2);
            if d <= best_d {
                best_d = d;
                best = ReferencePoint {
                    x: qx,
                    y: qy,
                    v_ref: w.v_ref,
                    tangent: Some([ux, uy]),
                    index: i,
                };
            }
        }
        best
    }
}

/// Cost of one step split by term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub control: f64,
    pub reference: f64,
    pub velocity: f64,
    pub constraint: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.control + self.reference + self.velocity + self.constraint
    }
}

/// Everything needed to evaluate the stage cost at one planning step.
#[derive(Debug, Clone, Copy)]
pub struct StepCostContext<'a> {
    pub reference: &'a ReferencePath,
    pub weights: &'a CostWeights,
    pub limits: &'a ControlLimits,
    pub control_barrier: &'a BarrierParams,
    pub obstacle_barrier: &'a BarrierParams,
    pub geometry: &'a VehicleGeometry,
    pub obstacles: &'a [EllipseObstacle],
    pub road: Option<&'a RoadBounds>,
    pub r_safe: f64,
    pub curvature: ConstraintCurvature,
}

/// How the curvature of nonlinear state constraints enters the barrier
/// Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintCurvature {
    /// Full chain rule, including the constraint's own Hessian.
    Exact,
    /// The constraint is linearized before the barrier is applied, which keeps
    /// the barrier Hessian positive semidefinite.
    #[default]
    Linearized,
}

/// Cost of one step and, when requested, its quadratization. `u` is `None` at
/// the terminal step, which carries no control effort or actuator limits.
pub fn evaluate_step(
    ctx: &StepCostContext<'_>,
    x: &VehicleState,
    u: Option<&ControlInput>,
    with_derivatives: bool,
) -> (CostBreakdown, Option<QuadraticCostTerm>) {
    let mut parts = CostBreakdown::default();
    let mut quad = with_derivatives.then(QuadraticCostTerm::zero);
    let w = ctx.weights;

    if let Some(u) = u {
        parts.control = w.w_a * u.a * u.a + w.w_delta * u.delta * u.delta;
        if let Some(q) = quad.as_mut() {
            q.g[4] += 2.0 * w.w_a * u.a;
            q.g[5] += 2.0 * w.w_delta * u.delta;
            q.h[(4, 4)] += 2.0 * w.w_a;
            q.h[(5, 5)] += 2.0 * w.w_delta;
        }
    }

    let r = ctx.reference.closest(x.px, x.py);
    let (ex, ey) = (x.px - r.x, x.py - r.y);
    parts.reference = w.w_ref * (ex * ex + ey * ey);
    let ev = x.v - r.v_ref;
    parts.velocity = w.w_vel * ev * ev;
    if let Some(q) = quad.as_mut() {
        q.g[0] += 2.0 * w.w_ref * ex;
        q.g[1] += 2.0 * w.w_ref * ey;
        q.g[2] += 2.0 * w.w_vel * ev;
        // Along a segment the error is the normal component only.
        let (hxx, hxy, hyy) = match r.tangent {
            Some([tx, ty]) => (1.0 - tx * tx, -tx * ty, 1.0 - ty * ty),
            None => (1.0, 0.0, 1.0),
        };
        q.h[(0, 0)] += 2.0 * w.w_ref * hxx;
        q.h[(0, 1)] += 2.0 * w.w_ref * hxy;
        q.h[(1, 0)] += 2.0 * w.w_ref * hxy;
        q.h[(1, 1)] += 2.0 * w.w_ref * hyy;
        q.h[(2, 2)] += 2.0 * w.w_vel;
    }

    let mut add_barrier = |c: ConstraintEval, p: &BarrierParams| {
        if let Some(q) = quad.as_mut() {
            let b = quadratize_barrier(&c, p);
            parts.constraint += b.c;
            *q += b;
        } else {
            parts.constraint += barrier(c.g, p);
        }
    };

    if let Some(u) = u {
        for c in control_limit_constraints(u, ctx.limits) {
            add_barrier(c.into(), ctx.control_barrier);
        }
    }
    for obs in ctx.obstacles {
        for mut c in ellipse_constraint(x, ctx.geometry, obs, ctx.r_safe) {
            if ctx.curvature == ConstraintCurvature::Linearized {
                c.hess = Matrix4::zeros();
            }
            add_barrier(c.into(), ctx.obstacle_barrier);
        }
    }
    if let Some(road) = ctx.road {
        for mut c in road_constraints(x, ctx.geometry, road) {
            if ctx.curvature == ConstraintCurvature::Linearized {
                c.hess = Matrix4::zeros();
            }
            add_barrier(c.into(), ctx.obstacle_barrier);
        }
    }

    if let Some(q) = quad.as_mut() {
        q.c = parts.total();
        q.symmetrize();
    }
    (parts, quad)
}

/// Quadratized stage cost at one step.
pub fn build_step_cost(ctx: &StepCostContext<'_>, x: &VehicleState, u: Option<&ControlInput>) -> QuadraticCostTerm {
    evaluate_step(ctx, x, u, true).1.expect("derivatives requested")
}

/// The planner objective over a horizon: a weight set that may vary by step,
/// obstacles grouped by the step at which they apply.
#[derive(Debug, Clone)]
pub struct PlannerCost {
    pub reference: ReferencePath,
    pub weights: CostWeights,
    pub limits: ControlLimits,
    pub control_barrier: BarrierParams,
    pub obstacle_barrier: BarrierParams,
    pub geometry: VehicleGeometry,
    pub road: Option<RoadBounds>,
    pub r_safe: f64,
    pub curvature: ConstraintCurvature,
    obstacles_by_step: Vec<Vec<EllipseObstacle>>,
    weights_by_step: Vec<CostWeights>,
}

impl PlannerCost {
    pub fn new(reference: ReferencePath, weights: CostWeights, limits: ControlLimits, geometry: VehicleGeometry) -> Self {
        Self {
            reference,
            weights,
            limits,
            control_barrier: BarrierParams::CONTROL_DEFAULT,
            obstacle_barrier: BarrierParams::OBSTACLE_DEFAULT,
            geometry,
            road: None,
            r_safe: 0.0,
            curvature: ConstraintCurvature::default(),
            obstacles_by_step: Vec::new(),
            weights_by_step: Vec::new(),
        }
    }

    /// Per-step weights; steps past the end of `weights` use `self.weights`.
    /// An empty slice restores a single weight set.
    pub fn set_step_weights(&mut self, weights: &[CostWeights]) {
        self.weights_by_step.clear();
        self.weights_by_step.extend_from_slice(weights);
    }

    pub fn weights_at(&self, t: usize) -> &CostWeights {
        self.weights_by_step.get(t).unwrap_or(&self.weights)
    }

    /// Replaces the obstacle set; each obstacle applies at its `active_step`.
    pub fn set_obstacles(&mut self, obstacles: &[EllipseObstacle]) {
        self.obstacles_by_step.iter_mut().for_each(Vec::clear);
        for o in obstacles {
            if self.obstacles_by_step.len() <= o.active_step {
                self.obstacles_by_step.resize(o.active_step + 1, Vec::new());
            }
            self.obstacles_by_step[o.active_step].push(*o);
        }
    }

    pub fn obstacles_at(&self, t: usize) -> &[EllipseObstacle] {
        self.obstacles_by_step.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn context(&self, t: usize) -> StepCostContext<'_> {
        StepCostContext {
            reference: &self.reference,
            weights: self.weights_at(t),
            limits: &self.limits,
            control_barrier: &self.control_barrier,
            obstacle_barrier: &self.obstacle_barrier,
            geometry: &self.geometry,
            obstacles: self.obstacles_at(t),
            road: self.road.as_ref(),
            r_safe: self.r_safe,
            curvature: self.curvature,
        }
    }

    pub fn breakdown(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> CostBreakdown {
        evaluate_step(&self.context(t), x, u, false).0
    }
}

impl CostModel for PlannerCost {
    fn cost(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> f64 {
        self.breakdown(t, x, u).total()
    }

    fn quadratize(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> QuadraticCostTerm {
        build_step_cost(&self.context(t), x, u)
    }
}
