//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use cilqr::dynamics::{ControlInput, LinearizedStep, VehicleGeometry, VehicleState};
use cilqr::ilqr::{CostModel, Dynamics, QuadraticCostTerm};
use cilqr::prediction::{ControlIntervals, ReachBox, TargetObservation, Uncertainty};
use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Matrix6, SMatrix, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn pack(x: &VehicleState, u: &ControlInput) -> Vector6<f64> {
    Vector6::new(x.px, x.py, x.v, x.theta, u.a, u.delta)
}

pub fn unpack(z: &Vector6<f64>) -> (VehicleState, ControlInput) {
    (VehicleState::new(z[0], z[1], z[2], z[3]), ControlInput::new(z[4], z[5]))
}

/// Central-difference Jacobian of a map from the stacked (state, control)
/// vector to the next state.
pub fn fd_transition_jacobian(f: impl Fn(&VehicleState, &ControlInput) -> VehicleState, z: &Vector6<f64>, h: f64) -> SMatrix<f64, 4, 6> {
    let mut jac = SMatrix::<f64, 4, 6>::zeros();
    for j in 0..6 {
        let (mut zp, mut zm) = (*z, *z);
        zp[j] += h;
        zm[j] -= h;
        let (xp, up) = unpack(&zp);
        let (xm, um) = unpack(&zm);
        let d = (f(&xp, &up).to_vector() - f(&xm, &um).to_vector()) / (2.0 * h);
        jac.set_column(j, &d);
    }
    jac
}

/// Central-difference gradient and Hessian of a scalar function of six
/// variables.
pub fn fd_gradient_hessian(f: impl Fn(&Vector6<f64>) -> f64, z: &Vector6<f64>, h: f64) -> (Vector6<f64>, Matrix6<f64>) {
    let mut grad = Vector6::zeros();
    let mut hess = Matrix6::zeros();
    let f0 = f(z);
    for i in 0..6 {
        let mut zp = *z;
        let mut zm = *z;
        zp[i] += h;
        zm[i] -= h;
        let (fp, fm) = (f(&zp), f(&zm));
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let eval = |si: f64, sj: f64| {
                let mut w = *z;
                w[i] += si * h;
                w[j] += sj * h;
                f(&w)
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (grad, hess)
}

/// Worst entrywise error relative to the larger of the two magnitudes and a
/// floor that absorbs round-off near zero.
pub fn rel_err<const R: usize, const C: usize>(a: &SMatrix<f64, R, C>, b: &SMatrix<f64, R, C>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Continuous bicycle ODE with steering angle and steering rate:
/// state `[px, py, v, theta, delta]`.
fn bicycle_rates(s: &[f64; 5], accel: f64, rate: f64, wheelbase: f64) -> [f64; 5] {
    let [_, _, v, theta, delta] = *s;
    [v * theta.cos(), v * theta.sin(), accel, v * delta.tan() / wheelbase, rate]
}

pub fn rk4(s: &[f64; 5], accel: f64, rate: f64, wheelbase: f64, h: f64) -> [f64; 5] {
    let add = |a: &[f64; 5], b: &[f64; 5], k: f64| std::array::from_fn::<f64, 5, _>(|i| a[i] + k * b[i]);
    let k1 = bicycle_rates(s, accel, rate, wheelbase);
    let k2 = bicycle_rates(&add(s, &k1, 0.5 * h), accel, rate, wheelbase);
    let k3 = bicycle_rates(&add(s, &k2, 0.5 * h), accel, rate, wheelbase);
    let k4 = bicycle_rates(&add(s, &k3, h), accel, rate, wheelbase);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Integrates the bicycle ODE with a constant steering angle (zero rate) over
/// `duration` using fixed RK4 steps of `h`. Acceleration is held constant.
pub fn integrate_constant_steer(x: &VehicleState, u: &ControlInput, wheelbase: f64, duration: f64, h: f64) -> VehicleState {
    let mut s = [x.px, x.py, x.v, x.theta, u.delta];
    let n = (duration / h).round() as usize;
    for _ in 0..n {
        s = rk4(&s, u.a, 0.0, wheelbase, h);
    }
    VehicleState::new(s[0], s[1], s[2], s[3])
}

/// Samples one admissible target trajectory: an initial state drawn from the
/// seed box and piecewise-constant controls redrawn every `hold` seconds,
/// integrated with RK4 substeps. Returns the state at each multiple of
/// `sample_dt` up to `n_samples`.
pub fn sample_target_trajectory(
    rng: &mut ChaCha8Rng,
    seed: &ReachBox,
    ctrl: &ControlIntervals,
    wheelbase: f64,
    hold: f64,
    sample_dt: f64,
    n_samples: usize,
) -> Vec<[f64; 5]> {
    let pick = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut s = [
        pick(rng, seed.px.lo, seed.px.hi),
        pick(rng, seed.py.lo, seed.py.hi),
        pick(rng, seed.v.lo, seed.v.hi),
        pick(rng, seed.theta.lo, seed.theta.hi),
        pick(rng, seed.delta.lo, seed.delta.hi),
    ];
    let holds_per_sample = (sample_dt / hold).round() as usize;
    let substeps = 4;
    let h = hold / substeps as f64;
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..holds_per_sample {
            let a = pick(rng, ctrl.accel[0], ctrl.accel[1]);
            let r = pick(rng, ctrl.steering_rate[0], ctrl.steering_rate[1]);
            for _ in 0..substeps {
                s = rk4(&s, a, r, wheelbase, h);
            }
        }
        out.push(s);
    }
    out
}

pub fn observation(t: f64, px: f64, py: f64, theta: f64, v: f64, unc: Option<Uncertainty>) -> TargetObservation {
    TargetObservation { t, px, py, theta, v, uncertainty: unc }
}

/// Linear time-invariant dynamics `x' = A x + B u` in the planner's types.
#[derive(Debug, Clone, Copy)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub dt: f64,
}

impl Dynamics for LinearModel {
    fn step(&self, x: &VehicleState, u: &ControlInput) -> VehicleState {
        VehicleState::from_vector(&(self.a * x.to_vector() + self.b * u.to_vector()))
    }

    fn linearize(&self, _: &VehicleState, _: &ControlInput) -> LinearizedStep {
        LinearizedStep { a: self.a, b: self.b }
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}

/// Stage cost `z'Hz/2 + g'z` on `z = [x; u]`, terminal cost on `x` only.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub stage_h: Matrix6<f64>,
    pub stage_g: Vector6<f64>,
    pub terminal_h: Matrix4<f64>,
    pub terminal_g: nalgebra::Vector4<f64>,
}

impl CostModel for QuadraticCost {
    fn cost(&self, _: usize, x: &VehicleState, u: Option<&ControlInput>) -> f64 {
        match u {
            Some(u) => {
                let z = pack(x, u);
                0.5 * z.dot(&(self.stage_h * z)) + self.stage_g.dot(&z)
            }
            None => {
                let xv = x.to_vector();
                0.5 * xv.dot(&(self.terminal_h * xv)) + self.terminal_g.dot(&xv)
            }
        }
    }

    fn quadratize(&self, t: usize, x: &VehicleState, u: Option<&ControlInput>) -> QuadraticCostTerm {
        // Expansion in deviations about (x, u): gradient H z + g, Hessian H.
        match u {
            Some(u) => {
                let z = pack(x, u);
                QuadraticCostTerm {
                    h: self.stage_h,
                    g: self.stage_h * z + self.stage_g,
                    c: self.cost(t, x, Some(u)),
                }
            }
            None => {
                let xv = x.to_vector();
                let mut h = Matrix6::zeros();
                h.fixed_view_mut::<4, 4>(0, 0).copy_from(&self.terminal_h);
                let mut g = Vector6::zeros();
                g.fixed_rows_mut::<4>(0).copy_from(&(self.terminal_h * xv + self.terminal_g));
                QuadraticCostTerm { h, g, c: self.cost(t, x, None) }
            }
        }
    }
}

/// Batch least-squares solution of the LQ problem: stacks the rollout
/// `x = Phi x0 + Gamma U` and solves the normal equations for the stacked
/// controls. Returns the optimal controls and the optimal total cost.
pub fn batch_lq(model: &LinearModel, cost: &QuadraticCost, x0: &VehicleState, n: usize) -> (Vec<ControlInput>, f64) {
    let nu = 2 * n;
    // Affine map from U to each state: x_t = c_t + M_t U.
    let mut consts = vec![x0.to_vector()];
    let mut maps = vec![DMatrix::<f64>::zeros(4, nu)];
    for t in 0..n {
        let c = model.a * consts[t];
        let mut m = &DMatrix::from_iterator(4, 4, model.a.iter().copied()) * &maps[t];
        let b = DMatrix::from_iterator(4, 2, model.b.iter().copied());
        m.view_mut((0, 2 * t), (4, 2)).copy_from(&b);
        consts.push(c);
        maps.push(m);
    }
    // Accumulate the quadratic form U'QU/2 + r'U + const.
    let mut q = DMatrix::<f64>::zeros(nu, nu);
    let mut r = DVector::<f64>::zeros(nu);
    let h = DMatrix::from_iterator(6, 6, cost.stage_h.iter().copied());
    let gs = DVector::from_iterator(6, cost.stage_g.iter().copied());
    for t in 0..n {
        // z_t = [c_t; 0] + S_t U with S_t = [M_t; E_t].
        let mut s = DMatrix::<f64>::zeros(6, nu);
        s.view_mut((0, 0), (4, nu)).copy_from(&maps[t]);
        s[(4, 2 * t)] = 1.0;
        s[(5, 2 * t + 1)] = 1.0;
        let mut z0 = DVector::<f64>::zeros(6);
        z0.rows_mut(0, 4).copy_from(&DVector::from_iterator(4, consts[t].iter().copied()));
        q += s.transpose() * &h * &s;
        r += s.transpose() * (&h * &z0 + &gs);
    }
    let ht = DMatrix::from_iterator(4, 4, cost.terminal_h.iter().copied());
    let gt = DVector::from_iterator(4, cost.terminal_g.iter().copied());
    let cn = DVector::from_iterator(4, consts[n].iter().copied());
    q += maps[n].transpose() * &ht * &maps[n];
    r += maps[n].transpose() * (&ht * &cn + &gt);

    let u = q.clone().cholesky().expect("batch Hessian positive definite").solve(&(-&r));
    let controls: Vec<ControlInput> = (0..n).map(|t| ControlInput::new(u[2 * t], u[2 * t + 1])).collect();
    let mut x = *x0;
    let mut total = 0.0;
    for c in &controls {
        total += cost.cost(0, &x, Some(c));
        x = model.step(&x, c);
    }
    total += cost.cost(n, &x, None);
    (controls, total)
}

/// A small stable, controllable LQ instance with cross terms and linear
/// terms.
pub fn lq_instance(dt: f64) -> (LinearModel, QuadraticCost) {
    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, dt, 0.0,
        0.0, 1.0, 0.0, 0.5 * dt,
        0.0, 0.0, 0.98, 0.0,
        0.0, 0.1 * dt, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        0.5 * dt * dt, 0.0,
        0.0, 0.2 * dt,
        dt, 0.0,
        0.0, dt,
    );
    let mut h = Matrix6::from_diagonal(&Vector6::new(0.3, 1.2, 0.8, 0.5, 1.5, 4.0));
    h[(0, 4)] = 0.05;
    h[(4, 0)] = 0.05;
    h[(1, 5)] = -0.1;
    h[(5, 1)] = -0.1;
    let g = Vector6::new(-0.4, 0.3, -1.0, 0.1, 0.02, -0.05);
    let terminal_h = Matrix4::from_diagonal(&nalgebra::Vector4::new(2.0, 3.0, 1.0, 1.5));
    let terminal_g = nalgebra::Vector4::new(-0.5, 0.2, -0.3, 0.0);
    (
        LinearModel { a, b, dt },
        QuadraticCost {
            stage_h: h,
            stage_g: g,
            terminal_h,
            terminal_g,
        },
    )
}

pub fn default_geometry() -> VehicleGeometry {
    VehicleGeometry::default()
}

/// Largest entry error relative to the largest entry of the reference.
pub fn normwise<const R: usize, const C: usize>(a: &SMatrix<f64, R, C>, b: &SMatrix<f64, R, C>) -> f64 {
    (a - b).amax() / b.amax().max(1e-12)
}

/// Worst relative error between the analytic transition Jacobian and central
/// differences over random states and controls in the operating range.
pub fn dynamics_jacobian_worst(samples: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let g = VehicleGeometry::default();
    let dt = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = VehicleState::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-6.0..6.0),
            rng.random_range(0.0..25.0),
            rng.random_range(-0.8..0.8),
        );
        let u = ControlInput::new(rng.random_range(-4.0..6.0), rng.random_range(-0.5..0.5));
        let analytic = cilqr::dynamics::linearize(&x, &u, dt, &g).jacobian();
        let numeric = fd_transition_jacobian(|x, u| cilqr::dynamics::step(x, u, dt, &g), &pack(&x, &u), 1e-5);
        worst = worst.max(rel_err(&analytic, &numeric, 1e-2));
    }
    worst
}

/// Worst gradient and Hessian errors of the barrier chain rule applied to
/// random quadratic constraints.
pub fn barrier_chain_worst(samples: usize, seed: u64) -> (f64, f64) {
    use cilqr::constraints::{barrier, quadratize_barrier, BarrierParams, ConstraintEval};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let p = BarrierParams {
            q1: rng.random_range(0.5..3.0),
            q2: rng.random_range(1.0..10.0),
        };
        // g(z) = c + a'z + z'Mz/2 with g(z0) drawn from [-1, 0.5].
        let a = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let m = Matrix6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let m = (m + m.transpose()) * 0.5;
        let z = Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let c = rng.random_range(-1.0..0.5) - a.dot(&z) - 0.5 * z.dot(&(m * z));
        let g = |w: &Vector6<f64>| c + a.dot(w) + 0.5 * w.dot(&(m * w));
        let eval = ConstraintEval {
            g: g(&z),
            grad: a + m * z,
            hess: m,
        };
        let q = quadratize_barrier(&eval, &p);
        let (fd_g, fd_h) = fd_gradient_hessian(|w| barrier(g(w), &p), &z, 1e-4);
        assert!((q.c - barrier(g(&z), &p)).abs() <= 1e-12 * q.c.abs());
        worst.0 = worst.0.max(normwise(&q.g, &fd_g));
        worst.1 = worst.1.max(normwise(&q.h, &fd_h));
    }
    worst
}

pub fn straight_planner_cost(obstacles: &[cilqr::constraints::EllipseObstacle]) -> cilqr::constraints::PlannerCost {
    use cilqr::constraints::{CostWeights, PlannerCost, ReferencePath, RoadBounds};
    let reference = ReferencePath::straight(-50.0, 300.0, -3.0, 0.5, 15.0);
    let weights = CostWeights {
        w_a: 1.0,
        w_delta: 50.0,
        w_ref: 0.6,
        w_vel: 1.2,
    };
    let mut cost = PlannerCost::new(reference, weights, cilqr::dynamics::ControlLimits::default(), VehicleGeometry::default());
    cost.road = Some(RoadBounds { y_min: -6.0, y_max: 6.0 });
    cost.set_obstacles(obstacles);
    cost
}

/// Worst gradient and Hessian errors of the full step cost (exact constraint
/// curvature) at random states 0.5 to 3 m outside a random obstacle.
pub fn step_cost_worst(samples: usize, seed: u64) -> (f64, f64) {
    use cilqr::constraints::{ConstraintCurvature, EllipseObstacle};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let obs = EllipseObstacle {
            center: [rng.random_range(10.0..40.0), rng.random_range(-4.0..4.0)],
            heading: rng.random_range(-0.3..0.3),
            semi_major: rng.random_range(3.0..4.0),
            semi_minor: rng.random_range(1.3..1.8),
            active_step: 0,
        };
        let mut cost = straight_planner_cost(&[obs]);
        cost.curvature = ConstraintCurvature::Exact;
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let grow = cost.geometry.circle_radius + rng.random_range(0.5..3.0);
        let (s, c) = obs.heading.sin_cos();
        let (ex, ey) = ((obs.semi_major + grow) * ang.cos(), (obs.semi_minor + grow) * ang.sin());
        let x = VehicleState::new(
            obs.center[0] + c * ex - s * ey,
            (obs.center[1] + s * ex + c * ey).clamp(-4.5, 4.5),
            rng.random_range(2.0..20.0),
            rng.random_range(-0.3..0.3),
        );
        let u = ControlInput::new(rng.random_range(-3.0..5.0), rng.random_range(-0.4..0.4));
        let q = cost.quadratize(0, &x, Some(&u));
        let f = |w: &Vector6<f64>| {
            let (xs, us) = unpack(w);
            cost.cost(0, &xs, Some(&us))
        };
        let (fd_g, fd_h) = fd_gradient_hessian(f, &pack(&x, &u), 1e-4);
        worst.0 = worst.0.max(normwise(&q.g, &fd_g));
        worst.1 = worst.1.max(normwise(&q.h, &fd_h));
    }
    worst
}

/// Counts sampled admissible trajectories (controls redrawn every 10 ms)
/// that leave the five-step box sequence grown from one observation.
pub fn reach_exits(obs: &TargetObservation, unc: &Uncertainty, samples: usize, seed: u64) -> usize {
    use cilqr::prediction::reach_horizon;
    use rand::SeedableRng;
    let (dt, wheelbase) = (0.1, VehicleGeometry::default().wheelbase);
    let ctrl = ControlIntervals::default();
    let boxes = reach_horizon(obs, unc, 0.05, &ctrl, 5, dt, wheelbase).unwrap();
    let start = ReachBox::seed(obs, unc, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .filter(|_| {
            let traj = sample_target_trajectory(&mut rng, &start, &ctrl, wheelbase, 0.01, dt, 5);
            traj.iter().zip(&boxes).any(|(s, b)| !b.contains(s[0], s[1], s[2], s[3]))
        })
        .count()
}

/// Synthetic observations of `x_{k+1} = transition x_k`.
pub fn synthetic_history(transition: &nalgebra::Matrix3<f64>, x0: nalgebra::Vector3<f64>, n: usize, t0: f64) -> Vec<TargetObservation> {
    let mut x = x0;
    (0..n)
        .map(|k| {
            let o = observation(t0 + k as f64 * 0.1, x[0], x[1], x[2], 0.0, None);
            x = transition * x;
            o
        })
        .collect()
}

/// Worst parameter error after 50 unforgotten updates on data from a known
/// rotating, contracting system.
pub fn rls_recovery_error() -> f64 {
    use cilqr::prediction::{rls_update, RlsConfig, RlsState};
    let (s, c) = 0.15f64.sin_cos();
    #[rustfmt::skip]
    let truth = nalgebra::Matrix3::new(
        0.99 * c, -0.99 * s, 0.02,
        0.99 * s,  0.99 * c, -0.01,
        0.03, 0.0, 0.97,
    );
    let history = synthetic_history(&truth, nalgebra::Vector3::new(8.0, -5.0, 3.0), 51, 0.0);
    let cfg = RlsConfig { lambda: 1.0, p0: 1e8 };
    let est = history
        .windows(2)
        .fold(RlsState::new(&cfg), |s, w| rls_update(&s, &w[0], &w[1]));
    (est.transition - truth).amax().max(est.offset.amax())
}

/// Largest control and cost mismatch between one backward/forward pass on
/// the LQ instance and the batch solution, over a few horizons.
pub fn lq_reduction_error() -> (f64, f64) {
    use cilqr::ilqr::{backward_pass, forward_pass, linearize_plan, quadratize_plan, rollout};
    let (model, cost) = lq_instance(0.1);
    let x0 = VehicleState::new(1.0, -0.5, 2.0, 0.3);
    let mut worst = (0.0f64, 0.0f64);
    for n in [1, 5, 20, 40] {
        let nominal = rollout(x0, &vec![ControlInput::default(); n], &model, &cost);
        let bp = backward_pass(&quadratize_plan(&nominal, &cost), &linearize_plan(&nominal, &model), 0.0).unwrap();
        let next = forward_pass(&nominal, &bp.law, 1.0, &model, &cost);
        let (oracle_u, oracle_cost) = batch_lq(&model, &cost, &x0, n);
        for (u, o) in next.controls.iter().zip(&oracle_u) {
            worst.0 = worst.0.max((u.a - o.a).abs()).max((u.delta - o.delta).abs());
        }
        worst.1 = worst.1.max((next.total_cost - oracle_cost).abs() / oracle_cost.abs().max(1.0));
    }
    worst
}
