use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use varevo::engine::{epde_rhs, pack_state, unpack_state, StateLayout};
use varevo::prelude::*;

fn gains() -> Gains {
    Gains::scaled_identity(1, 0.1, 0.05).unwrap()
}

#[test]
fn packed_lengths_match_the_benchmarks() {
    let di = problems::double_integrator::<f64>();
    let layout = StateLayout::for_problem(&di, 41);
    assert_eq!(layout.len(), 123);
    let init = problems::init_feedback_double_integrator::<f64>(41).unwrap();
    assert_eq!(pack_state(&init, &layout).unwrap().len(), 123);

    let br = problems::brachistochrone::<f64>();
    let layout = StateLayout::for_problem(&br, 101);
    assert_eq!(layout.len(), 405);
    let init = problems::init_straightline_brachistochrone::<f64>(101).unwrap();
    let flat = pack_state(&init, &layout).unwrap();
    assert_eq!(flat.len(), 405);
    assert_eq!(flat[404], 0.8f64.sqrt());
    // x block first, row-major
    assert_eq!(flat[100], init.x[(0, 100)]);
    assert_eq!(flat[101], init.x[(1, 0)]);
    assert_eq!(flat[303], init.u[(0, 0)]);
}

#[test]
fn wrong_length_is_a_layout_error() {
    let layout = StateLayout {
        n: 2,
        m: 1,
        nodes: 41,
        free_tf: false,
    };
    let err = unpack_state(&DVector::<f64>::zeros(124), &layout, 0.0, Some(2.0)).unwrap_err();
    assert_eq!(
        err,
        VemError::Layout {
            expected: 123,
            got: 124
        }
    );
    let short = problems::init_feedback_double_integrator::<f64>(21).unwrap();
    assert!(matches!(
        pack_state(&short, &layout),
        Err(VemError::Layout { .. })
    ));
}

proptest! {
    #[test]
    fn pack_unpack_round_trips(
        (n, m, nodes, free) in (1usize..4, 1usize..3, 3usize..12, any::<bool>()),
        seed in proptest::collection::vec(-10.0f64..10.0, 64),
        tf in 0.1f64..5.0,
    ) {
        let layout = StateLayout { n, m, nodes, free_tf: free };
        let values: Vec<f64> = (0..layout.len()).map(|k| seed[k % seed.len()] * (k as f64 + 1.0)).collect();
        let mut flat = DVector::from_vec(values);
        if free {
            let last = flat.len() - 1;
            flat[last] = tf;
        }
        let traj = unpack_state(&flat, &layout, 0.0, (!free).then_some(tf)).unwrap();
        prop_assert_eq!(traj.tf, tf);
        prop_assert_eq!(pack_state(&traj, &layout).unwrap(), flat);
    }
}

#[test]
fn right_side_vanishes_at_the_analytic_optimum() {
    let problem = problems::double_integrator::<f64>();
    let opt = problems::double_integrator_optimum_grid(41).unwrap();
    let layout = StateLayout::for_problem(&problem, 41);
    let flat = pack_state(&opt, &layout).unwrap();
    let (rate, info) = epde_rhs(&problem, &flat, &layout, &gains(), true).unwrap();
    assert_eq!(rate.len(), 123);
    assert!(rate.amax() <= 1e-6, "{}", rate.amax());
    assert!(info.res_u <= 1e-8);
    assert_eq!(info.res_tf, 0.0);
}

#[test]
fn initial_state_rate_is_pinned() {
    let problem = problems::brachistochrone::<f64>();
    let init = problems::init_straightline_brachistochrone(101).unwrap();
    let layout = StateLayout::for_problem(&problem, 101);
    let flat = pack_state(&init, &layout).unwrap();
    for stretch in [false, true] {
        let (rate, _) = epde_rhs(&problem, &flat, &layout, &gains(), stretch).unwrap();
        for row in 0..3 {
            assert_eq!(rate[row * 101], 0.0);
        }
        assert!(rate[404] < 0.0);
    }
}

#[test]
fn zero_horizon_returns_the_initial_snapshot() {
    let problem = problems::double_integrator::<f64>();
    let init = problems::init_feedback_double_integrator(41).unwrap();
    let cfg = Config {
        tau_max: 0.0,
        ..Config::default()
    };
    let report = evolve(&problem, &init, &gains(), &cfg).unwrap();
    assert_eq!(report.snapshots.len(), 1);
    assert_eq!(report.stop_reason, StopReason::TauMaxReached);
    assert_eq!(report.last().tau, 0.0);
    assert_eq!(report.final_trajectory(), &init);
}

#[test]
fn infeasible_start_is_rejected() {
    let problem = problems::double_integrator::<f64>();
    let mut init = problems::init_feedback_double_integrator(41).unwrap();
    init.x[(0, 40)] += 1.0;
    let err = evolve(&problem, &init, &gains(), &Config::default()).unwrap_err();
    assert!(matches!(err, VemError::InfeasibleInit { .. }), "{err:?}");
}

#[test]
fn invalid_configuration_is_rejected() {
    let problem = problems::double_integrator::<f64>();
    let init = problems::init_feedback_double_integrator(41).unwrap();
    for cfg in [
        Config {
            rel_tol: 0.0,
            ..Config::default()
        },
        Config {
            tau_max: -1.0,
            ..Config::default()
        },
        Config {
            snapshot_every: f64::NAN,
            ..Config::default()
        },
    ] {
        assert!(matches!(
            evolve(&problem, &init, &gains(), &cfg),
            Err(VemError::Config(_))
        ));
    }
    let wide = Gains::new(DMatrix::identity(2, 2), 1.0).unwrap();
    assert!(evolve(&problem, &init, &wide, &Config::default()).is_err());
}

#[test]
fn short_run_descends_and_keeps_the_initial_state() {
    let problem = problems::double_integrator::<f64>();
    let init = problems::init_feedback_double_integrator(41).unwrap();
    let cfg = Config {
        tau_max: 12.0,
        snapshot_every: 3.0,
        ..Config::default()
    };
    let report = evolve(&problem, &init, &gains(), &cfg).unwrap();
    assert_eq!(report.stop_reason, StopReason::TauMaxReached);
    let taus: Vec<f64> = report.snapshots.iter().map(|s| s.tau).collect();
    assert_eq!(taus, vec![0.0, 3.0, 6.0, 9.0, 12.0]);
    for pair in report.snapshots.windows(2) {
        assert!(pair[1].cost <= pair[0].cost + 10.0 * cfg.abs_tol);
        assert!(pair[1].res_u < pair[0].res_u);
    }
    for s in &report.snapshots {
        assert_eq!(s.trajectory.state(0), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(s.tf, 2.0);
        assert_eq!(s.pi.len(), 2);
    }
    assert!(report.steps_accepted > 0 && report.rhs_evaluations > 6 * report.steps_accepted);
}

#[test]
fn residual_stop_ends_early() {
    let problem = problems::double_integrator::<f64>();
    let init = problems::init_feedback_double_integrator(41).unwrap();
    let cfg = Config {
        residual_tol: 1e-2,
        ..Config::default()
    };
    let report = evolve(&problem, &init, &gains(), &cfg).unwrap();
    assert_eq!(report.stop_reason, StopReason::ResidualMet);
    let last = report.last();
    assert!(last.res_u < 1e-2);
    assert!(last.tau < 300.0);
}

#[test]
fn evolution_from_the_optimum_stops_immediately() {
    let problem = problems::double_integrator::<f64>();
    let opt = problems::double_integrator_optimum_grid(41).unwrap();
    let report = evolve(&problem, &opt, &gains(), &Config::default()).unwrap();
    assert_eq!(report.stop_reason, StopReason::ResidualMet);
    assert_eq!(report.snapshots.len(), 1);
}
