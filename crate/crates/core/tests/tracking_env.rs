use proptest::prelude::*;
use zoac_core::env::{evaluate, Action, Controller, Environment, PREDICTION_ERROR};
use zoac_core::tasks::TrackingTask;
use zoac_core::tracking::{
    generate_reference, mpc_solve, tracking_cost, BicycleParams, Input, MpcController, MpcProblem, MpcWeights,
    ProfileKind, ReferenceConfig, SolverConfig, State, TrackingEnv, TrackingScenario,
};
use zoac_core::zoac::Task;

const STEER: f64 = 2.0 * std::f64::consts::PI / 15.0;

fn sine_reference(seed: u64, n: usize) -> Vec<State> {
    generate_reference(&ReferenceConfig::default(), seed, n + 1, 0.1).unwrap().states
}

fn inputs_strategy(n: usize) -> impl Strategy<Value = Vec<Input>> {
    prop::collection::vec((-STEER..STEER, -3.0f64..3.0).prop_map(|(d, a)| [d, a]), n)
}

fn offset_start(r: &State, dy: f64, dphi: f64, du: f64) -> State {
    let mut x = *r;
    x[1] += dy;
    x[2] += dphi;
    x[3] += du;
    x
}

fn weights_strategy() -> impl Strategy<Value = MpcWeights> {
    (
        prop::collection::vec(-6.0f64..2.0, 6),
        prop::collection::vec(-6.0f64..2.0, 6),
        prop::collection::vec(-3.0f64..1.0, 2),
    )
        .prop_map(|(s, t, i)| {
            let e = |v: &[f64]| v.iter().map(|x| 10f64.powf(*x)).collect::<Vec<_>>();
            let (s, t, i) = (e(&s), e(&t), e(&i));
            MpcWeights {
                stage: std::array::from_fn(|k| s[k]),
                terminal: std::array::from_fn(|k| t[k]),
                input: [i[0], i[1]],
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shooting_gradient_matches_central_differences(
        seed in 0u64..1000,
        u in inputs_strategy(8),
        w in weights_strategy(),
        dy in -1.0f64..1.0,
        dphi in -0.1f64..0.1,
    ) {
        let reference = sine_reference(seed, 8);
        let problem = MpcProblem {
            x0: offset_start(&reference[0], dy, dphi, 0.0),
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.99,
            bounds: [STEER, 3.0],
        };
        let (_, grad) = problem.objective_and_gradient(&u).unwrap();
        let scale = grad.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
        for k in 0..u.len() {
            for c in 0..2 {
                let h = 1e-6;
                let mut up = u.clone();
                up[k][c] += h;
                let mut dn = u.clone();
                dn[k][c] -= h;
                let fd = (problem.objective(&up).unwrap() - problem.objective(&dn).unwrap()) / (2.0 * h);
                let err = (fd - grad[k][c]).abs() / grad[k][c].abs().max(1e-3 * scale).max(1e-9);
                prop_assert!(err < 1e-5, "k {k} c {c}: fd {fd} grad {}", grad[k][c]);
            }
        }
    }

    #[test]
    fn solver_objective_never_increases(seed in 0u64..1000, dy in -2.0f64..2.0, dphi in -0.3f64..0.3, du in -2.0f64..2.0) {
        let reference = sine_reference(seed, 10);
        let w = MpcWeights::nominal();
        let problem = MpcProblem {
            x0: offset_start(&reference[0], dy, dphi, du),
            reference: &reference,
            model: &BicycleParams::TRUE,
            weights: &w,
            gamma: 0.99,
            bounds: [STEER, 3.0],
        };
        let sol = mpc_solve(&problem, &[[0.0; 2]; 10], 100, 1e-6).unwrap();
        prop_assert_eq!(sol.history.len(), sol.iterations + 1);
        for pair in sol.history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs());
        }
        prop_assert!(sol.inputs.iter().all(|u| u[0].abs() <= STEER && u[1].abs() <= 3.0));
    }

    #[test]
    fn weight_scale_leaves_first_input_unchanged(seed in 0u64..1000, dy in -1.5f64..1.5, c in prop::sample::select(vec![1e-3, 0.1, 7.0, 1e3])) {
        let reference = sine_reference(seed, 10);
        let w = MpcWeights::nominal();
        let ws = w.scaled(c);
        let x0 = offset_start(&reference[0], dy, 0.0, 0.0);
        let solve = |w: &MpcWeights| {
            let p = MpcProblem { x0, reference: &reference, model: &BicycleParams::TRUE, weights: w, gamma: 0.99, bounds: [STEER, 3.0] };
            mpc_solve(&p, &[[0.0; 2]; 10], 60, 1e-4).unwrap()
        };
        let (a, b) = (solve(&w), solve(&ws));
        prop_assert!((a.inputs[0][0] - b.inputs[0][0]).abs() <= 1e-4 * STEER);
        prop_assert!((a.inputs[0][1] - b.inputs[0][1]).abs() <= 1e-4 * 3.0);
    }

    #[test]
    fn termination_is_exact(seed in 0u64..1000, steer in -STEER..STEER, accel in -3.0f64..3.0) {
        let scenario = TrackingScenario { horizon: 3, ..Default::default() };
        let mut env = TrackingEnv::new(scenario).unwrap();
        env.reset(seed);
        let mut t = 0;
        loop {
            let s = *env.state();
            let r_t = *env.reference().unwrap().at(t);
            let r_next = *env.reference().unwrap().at(t + 1);
            let res = env.step(&Action::new(vec![steer, accel])).unwrap();
            t += 1;
            let x = env.state();
            let violated = (x[1] - r_next[1]).abs() > 4.0
                || (x[2] - r_next[2]).abs() > std::f64::consts::FRAC_PI_4
                || (x[3] - r_next[3]).abs() > 4.0
                || x[3] < 0.5;
            prop_assert_eq!(res.terminated, violated);
            let stage = tracking_cost(&s, &r_t, steer, accel);
            let extra = if violated { 1000.0 } else { 0.0 };
            prop_assert!((res.cost - stage - extra).abs() <= 1e-9 * res.cost.max(1.0));
            if res.done() {
                prop_assert!(res.terminated || t == 200);
                break;
            }
        }
    }
}

#[test]
fn true_model_predicts_exactly() {
    let task = TrackingTask::with_horizon(8, None);
    let mut env = task.make_env().unwrap();
    let mut ctrl = task.nominal_controller().unwrap();
    ctrl.reset();
    let mut obs = env.reset(5);
    let mut steps = 0;
    loop {
        let a = ctrl.act(&obs).unwrap();
        let r = env.step(&a).unwrap();
        assert_eq!(r.info(PREDICTION_ERROR), Some(0.0), "step {steps}");
        steps += 1;
        if r.done() {
            break;
        }
        obs = r.next_obs;
    }
    assert!(steps > 50);
}

#[test]
fn mismatched_model_has_positive_error_and_regulariser_charges_it() {
    let wrong = BicycleParams {
        m: 1800.0,
        kf: -100_000.0,
        ..BicycleParams::TRUE
    };
    let run = |regularization: Option<f64>| {
        let scenario = TrackingScenario {
            horizon: 8,
            regularization,
            ..Default::default()
        };
        let mut env = TrackingEnv::new(scenario).unwrap();
        let solver = SolverConfig {
            horizon: 8,
            ..Default::default()
        };
        let mut ctrl = MpcController::new(solver, wrong, MpcWeights::nominal()).unwrap();
        ctrl.reset();
        let mut obs = env.reset(1);
        let mut out = Vec::new();
        for _ in 0..30 {
            let a = ctrl.act(&obs).unwrap();
            let r = env.step(&a).unwrap();
            out.push((r.cost, r.info(PREDICTION_ERROR).unwrap()));
            obs = r.next_obs;
        }
        out
    };
    let plain = run(None);
    let reg = run(Some(50.0));
    assert!(plain.iter().any(|(_, e)| *e > 0.0));
    for ((c0, e0), (c1, e1)) in plain.iter().zip(&reg) {
        assert_eq!(e0, e1);
        assert!((c1 - c0 - 25.0 * e0).abs() <= 1e-12 * c1.max(1.0));
    }
}

#[test]
fn nominal_controller_finishes_sine_episodes() {
    let task = TrackingTask::with_horizon(10, None);
    let mut env = task.make_env().unwrap();
    let mut ctrl = task.nominal_controller().unwrap();
    let report = evaluate(env.as_mut(), &mut ctrl, &task.nominal_theta(), 3, 0).unwrap();
    assert_eq!(report.terminated_episodes, 0);
    assert!(report.episode_lengths.iter().all(|l| *l == 200));
    assert_eq!(report.mean_prediction_error, Some(0.0));
}

#[test]
fn every_profile_generates_valid_references() {
    for profile in [ProfileKind::Straight, ProfileKind::SinePath, ProfileKind::DoubleLaneChange] {
        let cfg = ReferenceConfig {
            profile,
            ..Default::default()
        };
        let r = generate_reference(&cfg, 3, 250, 0.1).unwrap();
        assert_eq!(r.len(), 250);
        assert!(r.states.iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn mismatched_horizons_are_rejected() {
    let scenario = TrackingScenario {
        horizon: 5,
        ..Default::default()
    };
    let solver = SolverConfig {
        horizon: 6,
        ..Default::default()
    };
    assert!(TrackingTask::new(scenario, solver).unwrap_err().is_config());
}
