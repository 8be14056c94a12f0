//! Iterative LQR.
//!
//! Each iteration linearizes the dynamics and quadratizes the cost about the
//! current nominal trajectory, runs a Riccati backward pass to obtain an affine
//! feedback law, and rolls that law forward through the nonlinear dynamics with
//! a backtracking line search.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix6, Vector2, Vector4, Vector6};
use thiserror::Error;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ControlInput, ControlLimits, LinearizedStep, VehicleGeometry, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlqrError {
    #[error("control Hessian not positive definite at step {step} (regularization {reg:e})")]
    NotPositiveDefinite { step: usize, reg: f64 },
    #[error("horizon must contain at least one control")]
    EmptyHorizon,
    #[error("expected {expected} cost terms, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Discrete-time transition model used by the solver.
pub trait Dynamics {
    fn step(&self, x: &VehicleState, u: &ControlInput) -> VehicleState;
    fn linearize(&self, x: &VehicleState, u: &ControlInput) -> LinearizedStep;
    /// Projects a control onto the admissible set before integration.
    fn clamp(&self, u: ControlInput) -> ControlInput {
        u
    }
    fn dt(&self) -> f64;
}

/// The kinematic bicycle with optional actuator saturation.
#[derive(Debug, Clone, Copy)]
pub struct BicycleModel {
    pub geometry: VehicleGeometry,
    pub dt: f64,
    pub limits: Option<ControlLimits>,
}

impl Dynamics for BicycleModel {
    fn step(&self, x: &VehicleState, u: &ControlInput) -> VehicleState {
        dynamics::step(x, u, self.dt, &self.geometry)
    }

    fn linearize(&self, x: &VehicleState, u: &ControlInput) -> LinearizedStep {
        dynamics::linearize(x, u, self.dt, &self.geometry)
    }

    fn clamp(&self, u: ControlInput) -> ControlInput {
        match &self.limits {
            Some(l) => l.clamp(u),
            None => u,
        }
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}

/// Second-order expansion `c + g'z + z'Hz/2` of a stage cost over the stacked
/// vector `z = [x; u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCostTerm {
    pub h: Matrix6<f64>,
    pub g: Vector6<f64>,
    pub c: f64,
}

impl Default for QuadraticCostTerm {
    fn default() -> Self {
        Self::zero()
    }
}

impl QuadraticCostTerm {
    pub fn zero() -> Self {
        Self {
            h: Matrix6::zeros(),
            g: Vector6::zeros(),
            c: 0.0,
        }
    }

    pub fn lx(&self) -> Vector4<f64> {
        self.g.fixed_rows::<4>(0).into_owned()
    }

    pub fn lu(&self) -> Vector2<f64> {
        self.g.fixed_rows::<2>(4).into_owned()
    }

    pub fn lxx(&self) -> Matrix4<f64> {
        self.h.fixed_view::<4, 4>(0, 0).into_owned()
    }

    pub fn luu(&self) -> Matrix2<f64> {
        self.h.fixed_view::<2, 2>(4, 4).into_owned()
    }

    pub fn lux(&self) -> Matrix2x4<f64> {
        self.h.fixed_view::<2, 4>(4, 0).into_owned()
    }

    pub fn symmetrize(&mut self) {
        self.h = (self.h + self.h.transpose()) * 0.5;
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.g.iter().all(|v| v.is_finite()) && self.h.iter().all(|v| v.is_finite())
    }
}

impl std::ops::AddAssign for QuadraticCostTerm {
    fn add_assign(&mut self, rhs: Self) {
        self.h += rhs.h;
        self.g += rhs.g;
        self.c += rhs.c;
    }
}

impl std::ops::Add for QuadraticCostTerm {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

/// Per-step scalar cost and its quadratization.
///
/// Step indices run `0..=N`; the terminal step `N` is evaluated with
/// `u = None`.
pub trait CostModel {
    fn cost(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> f64;
    fn quadratize(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> QuadraticCostTerm;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Relative cost improvement below which the solver stops.
    pub cost_tolerance: f64,
    pub regularization_init: f64,
    pub regularization_growth: f64,
    pub regularization_min: f64,
    pub regularization_max: f64,
    /// Step sizes tried in order; must be decreasing.
    pub line_search_alphas: Vec<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            cost_tolerance: 1e-4,
            regularization_init: 1e-6,
            regularization_growth: 10.0,
            regularization_min: 1e-9,
            regularization_max: 1e10,
            line_search_alphas: (0..=10).map(|i| 0.5f64.powi(i)).collect(),
        }
    }
}

impl SolverSettings {
    pub fn is_valid(&self) -> bool {
        self.max_iters >= 1
            && self.cost_tolerance > 0.0
            && self.regularization_init > 0.0
            && self.regularization_growth > 1.0
            && self.regularization_max >= self.regularization_init
            && !self.line_search_alphas.is_empty()
            && self.line_search_alphas.iter().all(|a| *a > 0.0 && *a <= 1.0)
            && self.line_search_alphas.windows(2).all(|w| w[1] < w[0])
    }
}

/// A dynamically feasible state/control sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    /// `N + 1` states.
    pub states: Vec<VehicleState>,
    /// `N` controls.
    pub controls: Vec<ControlInput>,
    pub dt: f64,
    pub total_cost: f64,
}

impl TrajectoryPlan {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// Rolls `controls` out from `x0` through the dynamics (after clamping) and
/// evaluates the cost.
pub fn rollout<D: Dynamics, C: CostModel>(
    x0: VehicleState,
    controls: &[ControlInput],
    dynamics: &D,
    cost: &C,
) -> TrajectoryPlan {
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut applied = Vec::with_capacity(controls.len());
    states.push(x0);
    for u in controls {
        let u = dynamics.clamp(*u);
        let x = *states.last().unwrap();
        states.push(dynamics.step(&x, &u));
        applied.push(u);
    }
    let total_cost = total_cost(&states, &applied, cost);
    TrajectoryPlan {
        states,
        controls: applied,
        dt: dynamics.dt(),
        total_cost,
    }
}

pub fn total_cost<C: CostModel>(states: &[VehicleState], controls: &[ControlInput], cost: &C) -> f64 {
    let n = controls.len();
    let running: f64 = (0..n).map(|t| cost.cost(t, &states[t], Some(&controls[t]))).sum();
    running + cost.cost(n, &states[n], None)
}

/// Time-varying affine policy `du = k + K dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub gains: Vec<Matrix2x4<f64>>,
    pub feedforward: Vec<Vector2<f64>>,
}

impl FeedbackLaw {
    pub fn zeros(n: usize) -> Self {
        Self {
            gains: vec![Matrix2x4::zeros(); n],
            feedforward: vec![Vector2::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Output of the backward pass: the policy and the model-predicted cost change
/// `alpha * linear + alpha^2 * quadratic`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPass {
    pub law: FeedbackLaw,
    pub linear: f64,
    pub quadratic: f64,
}

impl BackwardPass {
    pub fn expected_change(&self, alpha: f64) -> f64 {
        alpha * self.linear + alpha * alpha * self.quadratic
    }
}

/// Riccati recursion over the local LQ problem.
///
/// `quadratized` holds `N + 1` terms (the last is terminal; its control blocks
/// are ignored) and `linearized` holds `N` transitions. `reg` is added to the
/// diagonal of the control Hessian before factorization.
pub fn backward_pass(
    quadratized: &[QuadraticCostTerm],
    linearized: &[LinearizedStep],
    reg: f64,
) -> Result<BackwardPass, IlqrError> {
    let n = linearized.len();
    if n == 0 {
        return Err(IlqrError::EmptyHorizon);
    }
    if quadratized.len() != n + 1 {
        return Err(IlqrError::LengthMismatch {
            expected: n + 1,
            got: quadratized.len(),
        });
    }
    let terminal = &quadratized[n];
    let mut vx = terminal.lx();
    let mut vxx = terminal.lxx();
    let mut law = FeedbackLaw::zeros(n);
    let (mut linear, mut quadratic) = (0.0, 0.0);

    for t in (0..n).rev() {
        let q = &quadratized[t];
        let LinearizedStep { a, b } = &linearized[t];
        let at = a.transpose();
        let bt = b.transpose();
        let vxx_a = vxx * a;
        let vxx_b = vxx * b;

        let qx = q.lx() + at * vx;
        let qu = q.lu() + bt * vx;
        let qxx = q.lxx() + at * vxx_a;
        let quu = q.luu() + bt * vxx_b;
        let qux = q.lux() + bt * vxx_a;

        let quu_reg = quu + Matrix2::identity() * reg;
        let chol = quu_reg
            .cholesky()
            .ok_or(IlqrError::NotPositiveDefinite { step: t, reg })?;
        let k = -chol.solve(&qu);
        let gain = -chol.solve(&qux);

        linear += k.dot(&qu);
        quadratic += 0.5 * k.dot(&(quu * k));

        let gt = gain.transpose();
        vx = qx + gt * quu * k + gt * qu + qux.transpose() * k;
        vxx = qxx + gt * quu * gain + gt * qux + qux.transpose() * gain;
        vxx = (vxx + vxx.transpose()) * 0.5;

        law.gains[t] = gain;
        law.feedforward[t] = k;
    }
    Ok(BackwardPass { law, linear, quadratic })
}

/// Rolls the feedback law out through the nonlinear dynamics:
/// `u_t = u_hat_t + alpha k_t + K_t (x_t - x_hat_t)`, clamped before use.
pub fn forward_pass<D: Dynamics, C: CostModel>(
    nominal: &TrajectoryPlan,
    law: &FeedbackLaw,
    alpha: f64,
    dynamics: &D,
    cost: &C,
) -> TrajectoryPlan {
    let n = nominal.horizon();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(nominal.states[0]);
    for t in 0..n {
        let x = states[t];
        let dx = x.to_vector() - nominal.states[t].to_vector();
        let du = law.feedforward[t] * alpha + law.gains[t] * dx;
        let u = dynamics.clamp(ControlInput::from_vector(&(nominal.controls[t].to_vector() + du)));
        states.push(dynamics.step(&x, &u));
        controls.push(u);
    }
    let total_cost = total_cost(&states, &controls, cost);
    TrajectoryPlan {
        states,
        controls,
        dt: nominal.dt,
        total_cost,
    }
}

pub fn linearize_plan<D: Dynamics>(plan: &TrajectoryPlan, dynamics: &D) -> Vec<LinearizedStep> {
    plan.controls
        .iter()
        .zip(&plan.states)
        .map(|(u, x)| dynamics.linearize(x, u))
        .collect()
}

pub fn quadratize_plan<C: CostModel>(plan: &TrajectoryPlan, cost: &C) -> Vec<QuadraticCostTerm> {
    let n = plan.horizon();
    (0..=n)
        .map(|t| cost.quadratize(t, &plan.states[t], plan.controls.get(t)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No cost decrease under the full line-search schedule, even at maximum
    /// regularization. The returned plan is the last accepted one.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: TrajectoryPlan,
    pub law: FeedbackLaw,
    /// Cost of the initial rollout followed by the cost after each accepted
    /// iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

pub fn solve<D: Dynamics, C: CostModel>(
    initial_state: VehicleState,
    initial_controls: &[ControlInput],
    dynamics: &D,
    cost: &C,
    settings: &SolverSettings,
) -> Result<Solution, IlqrError> {
    if initial_controls.is_empty() {
        return Err(IlqrError::EmptyHorizon);
    }
    let mut plan = rollout(initial_state, initial_controls, dynamics, cost);
    let mut law = FeedbackLaw::zeros(plan.horizon());
    let mut trace = vec![plan.total_cost];
    let mut reg = settings.regularization_init;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < settings.max_iters {
        iterations += 1;
        let lin = linearize_plan(&plan, dynamics);
        let quad = quadratize_plan(&plan, cost);

        loop {
            let bp = match backward_pass(&quad, &lin, reg) {
                Ok(bp) => bp,
                Err(IlqrError::NotPositiveDefinite { .. }) => {
                    reg *= settings.regularization_growth;
                    if reg > settings.regularization_max {
                        status = SolveStatus::Diverged;
                        break 'outer;
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };

            // Nothing left for the local model to gain.
            if -bp.linear <= settings.cost_tolerance * 1e-3 * plan.total_cost.abs().max(1e-12) {
                status = SolveStatus::Converged;
                break 'outer;
            }

            let accepted = settings.line_search_alphas.iter().find_map(|&alpha| {
                let cand = forward_pass(&plan, &bp.law, alpha, dynamics, cost);
                (cand.total_cost.is_finite() && cand.total_cost < plan.total_cost).then_some(cand)
            });
            match accepted {
                Some(cand) => {
                    let improvement = (plan.total_cost - cand.total_cost) / plan.total_cost.abs().max(1e-12);
                    plan = cand;
                    law = bp.law;
                    trace.push(plan.total_cost);
                    reg = (reg / settings.regularization_growth).max(settings.regularization_min);
                    if improvement < settings.cost_tolerance {
                        status = SolveStatus::Converged;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    reg *= settings.regularization_growth;
                    if reg > settings.regularization_max {
                        status = SolveStatus::Diverged;
                        break 'outer;
                    }
                    continue;
                }
            }
        }
    }

    Ok(Solution {
        plan,
        law,
        trace,
        iterations,
        status,
    })
}
