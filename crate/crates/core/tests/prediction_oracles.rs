mod common;

use cilqr::constraints::EllipseObstacle;
use cilqr::dynamics::VehicleGeometry;
use cilqr::prediction::interval::Interval;
use cilqr::prediction::rls::weighted_loss;
use cilqr::prediction::{
    inflate_box_to_ellipse, predict_hybrid, reach_horizon, reach_step, rls_predict, rls_update, ControlIntervals,
    PredictionConfig, ReachBox, RlsConfig, RlsState, TargetObservation, Uncertainty,
};
use common::{observation, reach_exits, rls_recovery_error, synthetic_history};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.1;
const WHEELBASE: f64 = 2.7;

#[test]
fn reach_boxes_contain_sampled_trajectories() {
    let obs = observation(0.0, 0.0, 0.0, 0.0, 10.0, None);
    assert_eq!(reach_exits(&obs, &Uncertainty::zero(), 10_000, 1), 0);
    let obs = observation(0.0, 30.0, 3.0, 0.3, 15.0, None);
    assert_eq!(reach_exits(&obs, &Uncertainty::default(), 10_000, 2), 0);
}

#[test]
fn zero_control_point_box_follows_straight_line() {
    let obs = observation(0.0, 0.0, -3.0, 0.0, 10.0, None);
    let boxes = reach_horizon(&obs, &Uncertainty::zero(), 0.0, &ControlIntervals::zero(), 5, DT, WHEELBASE).unwrap();
    assert_eq!(boxes.len(), 5);
    for (k, b) in boxes.iter().enumerate() {
        let expected = (k + 1) as f64 * 1.0;
        assert!((b.px.mid() - expected).abs() <= 1e-9);
        assert!((b.py.mid() + 3.0).abs() <= 1e-9);
        assert!(b.px.width() <= 1e-9);
    }
}

#[test]
fn widths_grow_with_each_step() {
    let obs = observation(0.0, 5.0, 3.0, 0.1, 12.0, None);
    let boxes = reach_horizon(&obs, &Uncertainty::default(), 0.05, &ControlIntervals::default(), 5, DT, WHEELBASE).unwrap();
    let seed = ReachBox::seed(&obs, &Uncertainty::default(), 0.05);
    let mut prev = seed;
    for b in &boxes {
        assert!(b.px.width() >= prev.px.width());
        assert!(b.py.width() >= prev.py.width());
        assert!(b.v.width() >= prev.v.width());
        assert!(b.theta.width() >= prev.theta.width());
        prev = *b;
    }
}

#[test]
fn translated_box_keeps_its_width() {
    let b = ReachBox {
        step: 0,
        px: Interval::new(0.0, 1.0),
        py: Interval::point(0.0),
        v: Interval::point(10.0),
        theta: Interval::point(0.0),
        delta: Interval::point(0.0),
        degenerate: false,
    };
    let next = reach_step(&b, &ControlIntervals::zero(), DT, WHEELBASE).unwrap();
    assert!((next.px.lo - 1.0).abs() <= 1e-9 && (next.px.hi - 2.0).abs() <= 1e-9);
}

#[test]
fn inflated_ellipse_contains_grown_rectangle() {
    let geom = VehicleGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (cx, cy, th) = (rng.random_range(-20.0..20.0), rng.random_range(-5.0..5.0), rng.random_range(-0.5..0.5));
        let b = ReachBox {
            step: 1,
            px: Interval::around(cx, rng.random_range(0.0..1.5)),
            py: Interval::around(cy, rng.random_range(0.0..1.5)),
            v: Interval::point(10.0),
            theta: Interval::around(th, rng.random_range(0.0..0.2)),
            delta: Interval::point(0.0),
            degenerate: false,
        };
        let e = inflate_box_to_ellipse(&b, &geom);
        // Every body point of every pose in the box lies inside.
        for _ in 0..1000 {
            let (px, py, t) = (
                rng.random_range(b.px.lo..=b.px.hi),
                rng.random_range(b.py.lo..=b.py.hi),
                rng.random_range(b.theta.lo..=b.theta.hi),
            );
            let (lx, ly) = (
                rng.random_range(-0.5..=0.5) * geom.body_length,
                rng.random_range(-0.5..=0.5) * geom.body_width,
            );
            let (s, c) = t.sin_cos();
            let p = [px + c * lx - s * ly, py + s * lx + c * ly];
            assert!(e.point_constraint(p, 0.0) >= -1e-12, "point {p:?} outside {e:?}");
        }
    }
}

#[test]
fn point_box_ellipse_is_footprint_times_sqrt2() {
    let geom = VehicleGeometry::default();
    let b = ReachBox::seed(&observation(0.0, 0.0, 0.0, 0.0, 10.0, None), &Uncertainty::zero(), 0.0);
    let e: EllipseObstacle = inflate_box_to_ellipse(&b, &geom);
    assert!((e.semi_major - 2.25 * 2f64.sqrt()).abs() <= 1e-12);
    assert!((e.semi_minor - 2f64.sqrt()).abs() <= 1e-12);
    let wide = ReachBox {
        px: Interval::new(-0.5, 0.5),
        ..b
    };
    let e2 = inflate_box_to_ellipse(&wide, &geom);
    assert!((e2.semi_major - e.semi_major - 0.5 * 2f64.sqrt()).abs() <= 1e-12);
}

fn run_rls(state: RlsState, history: &[TargetObservation]) -> RlsState {
    history.windows(2).fold(state, |s, w| rls_update(&s, &w[0], &w[1]))
}

#[test]
fn rls_recovers_linear_system() {
    let err = rls_recovery_error();
    assert!(err <= 1e-6, "parameter error {err:e} after 50 updates");
}

#[test]
fn rls_keeps_identity_for_static_target() {
    let history = synthetic_history(&Matrix3::identity(), Vector3::new(4.0, 3.0, 0.2), 30, 0.0);
    let est = run_rls(RlsState::new(&RlsConfig::default()), &history);
    let next = est.predict_one(&Vector3::new(4.0, 3.0, 0.2));
    assert!((next - Vector3::new(4.0, 3.0, 0.2)).amax() <= 1e-9);
}

#[test]
fn forgetting_tracks_a_dynamics_switch() {
    let (s, c) = 0.1f64.sin_cos();
    let before = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 0.98);
    let (s2, c2) = (-0.2f64).sin_cos();
    let after = Matrix3::new(1.01 * c2, -s2, 0.01, s2, 1.01 * c2, 0.0, 0.02, 0.0, 0.95);
    let first = synthetic_history(&before, Vector3::new(6.0, 2.0, 1.0), 40, 0.0);
    let last = first.last().unwrap();
    let mut second = synthetic_history(&after, Vector3::new(last.px, last.py, last.theta), 22, last.t);
    second.remove(0);
    let mut all = first.clone();
    all.extend(second.iter().take(20));

    let error_with = |lambda: f64| {
        let est = run_rls(RlsState::new(&RlsConfig { lambda, p0: 1e3 }), &all);
        let prev = &all[all.len() - 1];
        let truth = after * Vector3::new(prev.px, prev.py, prev.theta);
        (est.predict_one(&Vector3::new(prev.px, prev.py, prev.theta)) - truth).norm()
    };
    let (forgetful, exact) = (error_with(0.9), error_with(1.0));
    assert!(forgetful < exact, "lambda 0.9 error {forgetful:e} vs lambda 1 error {exact:e}");
}

#[test]
fn each_update_does_not_increase_weighted_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = RlsConfig::default();
    let mut history = vec![observation(0.0, 0.0, -3.0, 0.0, 10.0, None)];
    let mut state = RlsState::new(&cfg);
    let (mut px, mut py, mut th) = (0.0, -3.0, 0.0);
    for k in 1..80 {
        th += rng.random_range(-0.02..0.02);
        px += 1.0 * f64::cos(th) + rng.random_range(-0.05..0.05);
        py += 1.0 * f64::sin(th) + rng.random_range(-0.05..0.05);
        history.push(observation(k as f64 * DT, px, py, th, 10.0, None));
        let before = weighted_loss(&state.transition, &state.offset, &history, &cfg);
        state = rls_update(&state, &history[k - 1], &history[k]);
        let after = weighted_loss(&state.transition, &state.offset, &history, &cfg);
        assert!(after <= before + 1e-9 * before.max(1.0), "step {k}: {after} > {before}");
    }
}

#[test]
fn converged_filter_predicts_constant_velocity_motion() {
    let v = 12.0;
    let history: Vec<TargetObservation> = (0..=30)
        .map(|k| observation(k as f64 * DT, v * k as f64 * DT, -3.0, 0.0, v, None))
        .collect();
    let est = run_rls(RlsState::new(&RlsConfig::default()), &history);
    let last = history.last().unwrap();
    let poses = rls_predict(&est, last, 35, DT);
    for (k, p) in poses.iter().enumerate() {
        let truth_x = last.px + v * (k + 1) as f64 * DT;
        assert!((p[0] - truth_x).hypot(p[1] + 3.0) <= 0.2, "step {k}: {p:?}");
    }
}

#[test]
fn identity_filter_predicts_a_standing_target() {
    let est = RlsState::new(&RlsConfig::default());
    let obs = observation(0.0, 3.0, 4.0, 0.5, 0.0, None);
    for p in rls_predict(&est, &obs, 10, DT) {
        assert_eq!(p, Vector3::new(3.0, 4.0, 0.5));
    }
}

#[test]
fn hybrid_prediction_has_forty_ellipses() {
    let history: Vec<TargetObservation> = (0..10)
        .map(|k| observation(k as f64 * DT, 8.0 * k as f64 * DT, -3.0, 0.0, 8.0, None))
        .collect();
    let cfg = PredictionConfig::default();
    let pred = predict_hybrid(&history, &cfg).unwrap();
    assert_eq!(pred.obstacles.len(), 40);
    assert_eq!(pred.boxes.len(), 5);
    let steps: Vec<usize> = pred.obstacles.iter().map(|o| o.active_step).collect();
    assert_eq!(steps, (1..=40).collect::<Vec<_>>());
}

#[test]
fn static_target_reach_part_grows_and_tail_is_congruent() {
    let history: Vec<TargetObservation> = (0..10)
        .map(|k| observation(k as f64 * DT, 10.0, 3.0, 0.0, 0.0, Some(Uncertainty::zero())))
        .collect();
    let cfg = PredictionConfig {
        steering_half_width: 0.0,
        ..Default::default()
    };
    let pred = predict_hybrid(&history, &cfg).unwrap();
    let obs = &pred.obstacles;
    for w in obs[..5].windows(2) {
        assert!(w[1].semi_major >= w[0].semi_major && w[1].semi_minor >= w[0].semi_minor);
    }
    assert!(obs[4].semi_major > obs[0].semi_major);
    for o in &obs[5..] {
        assert!((o.semi_major - obs[5].semi_major).abs() <= 1e-12);
        assert!((o.semi_minor - obs[5].semi_minor).abs() <= 1e-12);
        assert!((o.center[0] - 10.0).abs() <= 1e-6 && (o.center[1] - 3.0).abs() <= 1e-6);
    }
}

#[test]
fn split_at_horizon_is_pure_reachability() {
    let history: Vec<TargetObservation> = (0..10)
        .map(|k| observation(k as f64 * DT, 10.0 * k as f64 * DT, -3.0, 0.0, 10.0, None))
        .collect();
    let cfg = PredictionConfig {
        split_s: 4.0,
        ..Default::default()
    };
    let pred = predict_hybrid(&history, &cfg).unwrap();
    assert_eq!(pred.boxes.len(), 40);
    assert_eq!(pred.obstacles.len(), 40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reach_step_contains_sampled_images(
        px in -50.0..50.0f64, py in -6.0..6.0f64, v in 2.0..30.0f64, theta in -0.6..0.6f64,
        seed in any::<u64>(),
    ) {
        let obs = observation(0.0, px, py, theta, v, None);
        prop_assert_eq!(reach_exits(&obs, &Uncertainty::default(), 200, seed), 0);
    }
}
