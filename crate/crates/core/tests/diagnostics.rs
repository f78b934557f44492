mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use varevo::diagnostics::*;
use varevo::linearization::Linearization;
use varevo::prelude::*;
use varevo::transition::TransitionSet;
use varevo::variation::*;

use common::{curved_uncontrolled, free_response, CurvedScalar, LinearSystem};

struct Eval {
    lin: Linearization<f64>,
    ts: TransitionSet<f64>,
    gf: GradientField<f64>,
    ms: MultiplierSystem<f64>,
}

fn eval(problem: &Problem, traj: &Trajectory, gains: &Gains) -> Eval {
    let lin = Linearization::evaluate(problem, traj).unwrap();
    let ts = TransitionSet::build(&lin).unwrap();
    let gf = compute_gradient_field(&lin, &ts);
    let ms = assemble_multiplier_system(&lin, &ts, &gf, gains).unwrap();
    Eval { lin, ts, gf, ms }
}

fn default_gains() -> Gains {
    Gains::scaled_identity(1, 0.1, 0.05).unwrap()
}

fn at_optimum() -> (Problem, Trajectory, Eval) {
    let problem = problems::double_integrator();
    let traj = problems::double_integrator_optimum_grid(41).unwrap();
    let e = eval(&problem, &traj, &default_gains());
    (problem, traj, e)
}

#[test]
fn costate_matches_the_analytic_costate() {
    let (_, traj, e) = at_optimum();
    let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
    for i in 0..traj.nodes() {
        let expected = problems::double_integrator_optimum::costate(traj.time(i));
        assert!((ct.gamma[(0, i)] - expected[0]).abs() < 1e-10);
        assert!((ct.gamma[(1, i)] - expected[1]).abs() < 1e-10);
    }
    // H = u^2/2 + gamma^T f
    let t = traj.time(10);
    let u = 3.0 * t - 3.5;
    let x2 = problems::double_integrator_optimum::state(t)[1];
    let h = 0.5 * u * u + 3.0 * x2 + (-3.0 * t + 3.5) * u;
    assert!((ct.hamiltonian[10] - h).abs() < 1e-10);
}

#[test]
fn costate_vanishes_without_cost_or_constraint() {
    let sys = LinearSystem {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.1]),
        b: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        tf: 1.0,
    };
    let traj = free_response(&sys, 21);
    let problem = Problem::new(sys).unwrap();
    let ct = reconstruct_costates_for(&problem, &traj, &DVector::zeros(0)).unwrap();
    assert_eq!(ct.gamma, DMatrix::zeros(2, 21));
}

#[test]
fn endpoint_identity_is_structural() {
    let br = problems::brachistochrone();
    let straight = problems::init_straightline_brachistochrone(101).unwrap();
    let curved = Problem::new(CurvedScalar).unwrap();
    for (problem, traj) in [(br, straight), (curved, curved_uncontrolled(31))] {
        let e = eval(&problem, &traj, &default_gains());
        let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
        let report = classical_condition_check(&e.lin, &ct);
        assert!(report.transversality_state <= 1e-10);
    }
}

#[test]
fn residuals_at_the_optimum() {
    let (_, _, e) = at_optimum();
    let (res_u, res_tf) = optimality_residuals(&e.lin, &e.gf, &e.ms);
    assert!(res_u <= 1e-8);
    assert_eq!(res_tf, 0.0);
}

#[test]
fn residuals_far_from_the_optimum() {
    let problem = problems::brachistochrone();
    let traj = problems::init_straightline_brachistochrone(101).unwrap();
    let e = eval(&problem, &traj, &default_gains());
    let (res_u, res_tf) = optimality_residuals(&e.lin, &e.gf, &e.ms);
    assert!(res_u > 0.01);
    assert!((res_u - 0.690_950_979_887_078_8).abs() < 1e-8, "{res_u}");
    // 1 + pi^T (g_x f) with g_x f = sqrt(20) [1, -1] at the end of the slide
    let c = 20f64.sqrt();
    assert!((res_tf - (1.0 + c * (e.ms.pi[0] - e.ms.pi[1]))).abs() < 1e-12);
}

#[test]
fn residual_without_constraint_is_the_gradient() {
    let problem = Problem::new(CurvedScalar).unwrap();
    let traj = curved_uncontrolled(21);
    let e = eval(&problem, &traj, &default_gains());
    let (res_u, _) = optimality_residuals(&e.lin, &e.gf, &e.ms);
    assert_eq!(res_u, e.gf.p_u.amax());
    assert_eq!(stationarity_check(&e.lin, &e.ts, &e.gf, &e.ms.pi), 0.0);
}

#[test]
fn classical_conditions_at_the_optimum() {
    let (_, _, e) = at_optimum();
    let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
    let report = classical_condition_check(&e.lin, &ct);
    assert!(report.costate_ode <= 1e-10, "{report:?}");
    assert!(report.hamiltonian_u <= 1e-10);
    assert!(report.transversality_state <= 1e-10);
    assert_eq!(report.transversality_time, None);
}

#[test]
fn costate_equation_is_exact_for_constant_dynamics() {
    let sys = LinearSystem {
        a: DMatrix::zeros(2, 2),
        b: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        tf: 1.0,
    };
    let traj = free_response(&sys, 11);
    let problem = Problem::new(sys).unwrap();
    let e = eval(&problem, &traj, &default_gains());
    let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
    assert_eq!(classical_condition_check(&e.lin, &ct).costate_ode, 0.0);
}

#[test]
fn costate_equation_residual_is_second_order() {
    let problem = Problem::new(CurvedScalar).unwrap();
    let residual = |nodes| {
        let e = eval(&problem, &curved_uncontrolled(nodes), &default_gains());
        let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
        classical_condition_check(&e.lin, &ct).costate_ode
    };
    let (coarse, fine) = (residual(41), residual(81));
    assert!(coarse > 1e-6);
    assert!(coarse / fine >= 3.5, "{coarse:e} / {fine:e}");
}

#[test]
fn hamiltonian_gradient_is_reported_away_from_the_optimum() {
    let problem = problems::double_integrator();
    let traj = problems::init_feedback_double_integrator(41).unwrap();
    let e = eval(&problem, &traj, &default_gains());
    let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
    assert!(classical_condition_check(&e.lin, &ct).hamiltonian_u > 0.1);
}

#[test]
fn bridge_between_costate_and_costate_free_forms() {
    let br = problems::brachistochrone();
    let straight = problems::init_straightline_brachistochrone(101).unwrap();
    let di = problems::double_integrator();
    let feedback = problems::init_feedback_double_integrator(41).unwrap();
    let curved = Problem::new(CurvedScalar).unwrap();
    for (problem, traj) in [
        (br, straight),
        (di, feedback),
        (curved, curved_uncontrolled(21)),
    ] {
        let e = eval(&problem, &traj, &default_gains());
        let ct = reconstruct_costates(&e.lin, &e.ts, &e.gf, &e.ms.pi);
        assert!(costate_bridge_residual(&e.lin, &e.gf, &e.ms, &ct) <= 1e-10);
    }
}

#[test]
fn stationarity_at_the_optimum() {
    let (_, _, e) = at_optimum();
    assert_abs_diff_eq!(e.ms.pi, DVector::from_vec(vec![3.0, -2.5]), epsilon = 1e-10);
    assert!(stationarity_check(&e.lin, &e.ts, &e.gf, &e.ms.pi) <= 1e-6);
}

#[test]
fn stationarity_does_not_depend_on_gains() {
    let problem = problems::brachistochrone();
    let traj = problems::init_straightline_brachistochrone(101).unwrap();
    let a = eval(&problem, &traj, &default_gains());
    let b = eval(
        &problem,
        &traj,
        &Gains::scaled_identity(1, 1.0, 1.0).unwrap(),
    );
    let pi = DVector::from_vec(vec![-0.1477, 0.0564]);
    let ra = stationarity_check(&a.lin, &a.ts, &a.gf, &pi);
    let rb = stationarity_check(&b.lin, &b.ts, &b.gf, &pi);
    assert_eq!(ra, rb);
    assert!(ra > 0.0);
}
