//! Closed-loop simulation: plan, apply the first control, advance the world.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{
    adaptive_weights, baseline_weights, CostWeights, EllipseObstacle, PlannerCost, ReferencePath, RoadBounds,
};
use crate::dynamics::{self, ControlInput, VehicleGeometry, VehicleState};
use crate::ilqr::{self, BicycleModel, SolveStatus, SolverSettings};
use crate::prediction::{ReachBox, TargetObservation, TargetPredictor, Uncertainty};

use super::behavior::ScriptedTarget;
use super::scenario::{ConfigError, ScenarioConfig, WeightMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickStatus {
    Solved,
    /// The solver hit its iteration cap; its best plan was still used.
    MaxIterations,
    /// The solver failed; the previous control was held.
    SolverDiverged,
    /// The ego overlapped a target; the run stops here.
    Collision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub t: f64,
    pub ego: VehicleState,
    /// Control applied from `t` to `t + dt`.
    pub control: ControlInput,
    /// Target states (body centre) at `t`.
    pub targets: Vec<VehicleState>,
    pub min_clearance: f64,
    /// Wall-clock solve time, zero unless timing is recorded.
    pub solve_ms: f64,
    pub iterations: usize,
    /// Solver cost after the initial rollout and each accepted iteration.
    pub cost_trace: Vec<f64>,
    pub status: TickStatus,
    pub weights: CostWeights,
    /// Planned states for the horizon, empty on a collision tick.
    pub plan: Vec<VehicleState>,
    pub obstacles: Vec<EllipseObstacle>,
    pub reach_boxes: Vec<ReachBox>,
    pub reach_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub dt: f64,
    pub reference_y: f64,
    pub ticks: Vec<TickRecord>,
    pub collided: bool,
}

impl SimLog {
    pub fn min_clearance(&self) -> f64 {
        self.ticks.iter().map(|t| t.min_clearance).fold(f64::INFINITY, f64::min)
    }

    pub fn max_lateral_deviation(&self) -> f64 {
        self.ticks
            .iter()
            .map(|t| (t.ego.py - self.reference_y).abs())
            .fold(0.0, f64::max)
    }

    pub fn diverged_ticks(&self) -> usize {
        self.ticks.iter().filter(|t| t.status == TickStatus::SolverDiverged).count()
    }
}

/// Smallest gap between the ego's collision circles and a target's body
/// rectangle. Negative when they overlap.
pub fn clearance(ego: &VehicleState, ego_geom: &VehicleGeometry, target: &VehicleState, target_geom: &VehicleGeometry) -> f64 {
    let (s, c) = target.theta.sin_cos();
    let (hl, hw) = (0.5 * target_geom.body_length, 0.5 * target_geom.body_width);
    ego_geom
        .circle_centers(ego)
        .into_iter()
        .map(|(x, y)| {
            let (dx, dy) = (x - target.px, y - target.py);
            let lon = c * dx + s * dy;
            let lat = -s * dx + c * dy;
            let ox = lon.abs() - hl;
            let oy = lat.abs() - hw;
            let outside = ox.max(0.0).hypot(oy.max(0.0));
            let inside = ox.max(oy).min(0.0);
            outside + inside - ego_geom.circle_radius
        })
        .fold(f64::INFINITY, f64::min)
}

/// Front bumper of the ego, assuming the body is centred between the axles.
fn front_bumper_x(ego: &VehicleState, geom: &VehicleGeometry) -> f64 {
    ego.px + (0.5 * geom.wheelbase + 0.5 * geom.body_length) * ego.theta.cos()
}

/// Absolute longitudinal distance to the nearest target in the ego's reference
/// lane travelling the same way, with that target's speed. A target just
/// passed still counts, so the weights stay continuous through the pass.
pub fn lead_target(ego: &VehicleState, targets: &[VehicleState], reference_y: f64, lane_width: f64) -> Option<(f64, f64)> {
    targets
        .iter()
        .filter(|t| (t.py - reference_y).abs() < 0.5 * lane_width)
        .filter(|t| (t.theta - ego.theta).cos() > 0.0)
        .map(|t| ((t.px - ego.px).abs(), t.v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn weights_for(cfg: &ScenarioConfig, ego: &VehicleState, targets: &[VehicleState]) -> CostWeights {
    let base = cfg.weights.fixed;
    match cfg.weights.mode {
        WeightMode::Fixed => base,
        WeightMode::Adaptive => {
            let p = &cfg.weights.adaptive;
            let (w_ref, w_vel) = match lead_target(ego, targets, cfg.road.reference_y(), cfg.road.lane_width()) {
                Some((gap, v)) => adaptive_weights(v, gap, p),
                None => baseline_weights(cfg.road.v_ref, p),
            };
            CostWeights { w_ref, w_vel, ..base }
        }
    }
}

/// Adaptive weights for every step of the horizon, from the gap between the
/// nominal ego path and the targets moving on at constant velocity.
fn horizon_weights(cfg: &ScenarioConfig, path: &[VehicleState], targets: &[VehicleState], dt: f64) -> Vec<CostWeights> {
    if cfg.weights.mode == WeightMode::Fixed {
        return Vec::new();
    }
    path.iter()
        .enumerate()
        .map(|(k, x)| {
            let ahead: Vec<VehicleState> = targets
                .iter()
                .map(|t| {
                    let s = t.v * k as f64 * dt;
                    VehicleState {
                        px: t.px + s * t.theta.cos(),
                        py: t.py + s * t.theta.sin(),
                        ..*t
                    }
                })
                .collect();
            weights_for(cfg, x, &ahead)
        })
        .collect()
}

fn observe(
    t: f64,
    s: &VehicleState,
    unc: &Uncertainty,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> TargetObservation {
    let mut jitter = |half: f64| {
        let h = half * noise_scale;
        if h > 0.0 {
            rng.random_range(-h..=h)
        } else {
            0.0
        }
    };
    TargetObservation {
        t,
        px: s.px + jitter(unc.px),
        py: s.py + jitter(unc.py),
        theta: s.theta + jitter(unc.theta),
        v: (s.v + jitter(unc.v)).max(0.0),
        uncertainty: Some(*unc),
    }
}

/// Shifts a plan's controls one step forward, repeating the last one.
fn shift_controls(controls: &[ControlInput]) -> Vec<ControlInput> {
    let mut out: Vec<ControlInput> = controls.iter().skip(1).copied().collect();
    out.push(controls.last().copied().unwrap_or_default());
    out
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimLog, ConfigError> {
    cfg.validate()?;
    let n = cfg.horizon_steps;
    let dt = cfg.dt;
    let ticks = cfg.total_ticks();
    let geom = cfg.ego.geometry;
    let tgeom = cfg.target_geometry;
    let ref_y = cfg.road.reference_y();
    let pred_cfg = cfg.prediction_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut ego = cfg.ego.state();
    let reach = ego.px + cfg.duration_s * (cfg.road.v_ref.max(ego.v) + 10.0) + n as f64 * dt * 40.0;
    let reference = ReferencePath::straight(ego.px - 50.0, reach, ref_y, cfg.road.waypoint_spacing, cfg.road.v_ref);
    let mut cost = PlannerCost::new(reference, cfg.weights.fixed, cfg.limits, geom);
    cost.control_barrier = cfg.barriers.control;
    cost.obstacle_barrier = cfg.barriers.obstacle;
    cost.r_safe = cfg.barriers.r_safe;
    cost.road = cfg.road.enforce_edges.then_some(RoadBounds {
        y_min: cfg.road.y_min,
        y_max: cfg.road.y_max,
    });
    let model = BicycleModel {
        geometry: geom,
        dt,
        limits: None,
    };
    let settings: &SolverSettings = &cfg.solver;

    let mut targets: Vec<ScriptedTarget> = cfg
        .targets
        .iter()
        .map(|t| ScriptedTarget::new(VehicleState::new(t.px, t.py, 0.0, t.theta), t.behavior))
        .collect();
    let unc = cfg.prediction.uncertainty;
    let mut predictors: Vec<TargetPredictor> = targets
        .iter()
        .map(|tgt| {
            let mut p = TargetPredictor::new(&cfg.prediction.rls);
            let s = tgt.state;
            for k in (1..=cfg.prediction.warmup_steps).rev() {
                let back = k as f64 * dt;
                let past = VehicleState {
                    px: s.px - s.v * back * s.theta.cos(),
                    py: s.py - s.v * back * s.theta.sin(),
                    ..s
                };
                p.observe(observe(-back, &past, &unc, cfg.prediction.noise_scale, &mut rng));
            }
            p
        })
        .collect();

    let mut controls = vec![ControlInput::default(); n];
    let mut applied = ControlInput::default();
    let mut log = SimLog {
        scenario: cfg.name.clone(),
        dt,
        reference_y: ref_y,
        ticks: Vec::with_capacity(ticks),
        collided: false,
    };

    for tick in 0..ticks {
        let t = tick as f64 * dt;
        let target_states: Vec<VehicleState> = targets.iter().map(|tg| tg.state).collect();
        let min_clearance = target_states
            .iter()
            .map(|s| clearance(&ego, &geom, s, &tgeom))
            .fold(f64::INFINITY, f64::min);
        let weights = weights_for(cfg, &ego, &target_states);

        if min_clearance < 0.0 {
            log.collided = true;
            log.ticks.push(TickRecord {
                tick,
                t,
                ego,
                control: ControlInput::default(),
                targets: target_states,
                min_clearance,
                solve_ms: 0.0,
                iterations: 0,
                cost_trace: Vec::new(),
                status: TickStatus::Collision,
                weights,
                plan: Vec::new(),
                obstacles: Vec::new(),
                reach_boxes: Vec::new(),
                reach_degenerate: false,
            });
            break;
        }

        let mut obstacles = Vec::new();
        let mut reach_boxes = Vec::new();
        let mut reach_degenerate = false;
        for (p, s) in predictors.iter_mut().zip(&target_states) {
            p.observe(observe(t, s, &unc, cfg.prediction.noise_scale, &mut rng));
            if let Some(h) = p.predict(&pred_cfg) {
                obstacles.extend(h.obstacles);
                reach_boxes.extend(h.boxes);
                reach_degenerate |= h.degenerate;
            }
        }
        cost.weights = weights;
        cost.set_obstacles(&obstacles);

        let guess: Vec<ControlInput> = controls
            .iter()
            .map(|u| ControlInput::new(u.a, u.delta + cfg.steering_dither))
            .collect();
        let nominal = std::iter::once(ego)
            .chain(guess.iter().scan(ego, |x, u| {
                *x = dynamics::step(x, u, dt, &geom);
                Some(*x)
            }))
            .collect::<Vec<_>>();
        cost.set_step_weights(&horizon_weights(cfg, &nominal, &target_states, dt));
        let started = Instant::now();
        let result = ilqr::solve(ego, &guess, &model, &cost, settings);
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let solve_ms = if cfg.record_timing { elapsed } else { 0.0 };

        let (status, iterations, cost_trace, plan) = match result {
            Ok(sol) if sol.status != SolveStatus::Diverged && sol.plan.total_cost.is_finite() => {
                applied = sol.plan.controls[0];
                controls = shift_controls(&sol.plan.controls);
                let status = if sol.status == SolveStatus::Converged {
                    TickStatus::Solved
                } else {
                    TickStatus::MaxIterations
                };
                (status, sol.iterations, sol.trace, sol.plan.states)
            }
            Ok(sol) => {
                controls = shift_controls(&controls);
                (TickStatus::SolverDiverged, sol.iterations, sol.trace, Vec::new())
            }
            Err(_) => {
                controls = shift_controls(&controls);
                (TickStatus::SolverDiverged, 0, Vec::new(), Vec::new())
            }
        };

        log.ticks.push(TickRecord {
            tick,
            t,
            ego,
            control: applied,
            targets: target_states,
            min_clearance,
            solve_ms,
            iterations,
            cost_trace,
            status,
            weights,
            plan,
            obstacles,
            reach_boxes,
            reach_degenerate,
        });

        let front = front_bumper_x(&ego, &geom);
        ego = dynamics::step(&ego, &applied, dt, &geom);
        for tg in &mut targets {
            tg.advance(t, dt, front, tgeom.body_length);
        }
    }
    Ok(log)
}
