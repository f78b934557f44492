//! Built-in benchmark problems, their feasible initial trajectories, and a
//! finite-difference oracle for the control gradient.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::engine::DEFAULT_FEASIBILITY_TOL;
use crate::error::{Result, VemError};
use crate::model::{OptimalControlProblem, ProblemModel, TerminalTime, TrajectoryGrid};
use crate::quadrature;
use crate::scalar::Real;

/// Substeps per node interval used when re-integrating trajectories.
pub const INIT_SUBSTEPS: usize = 10;

/// Minimum-energy transfer of a double integrator:
/// `x1' = x2`, `x2' = u`, `J = 1/2 int u^2`, `x(0) = [1, 1]`, `x(2) = [0, 0]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegrator;

impl<T: Real> OptimalControlProblem<T> for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn constraint_dim(&self) -> usize {
        2
    }
    fn initial_time(&self) -> T {
        T::zero()
    }
    fn initial_state(&self) -> DVector<T> {
        DVector::from_element(2, T::one())
    }
    fn terminal_time(&self) -> TerminalTime<T> {
        TerminalTime::Fixed(T::lit(2.0))
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, _t: T) -> DVector<T> {
        DVector::from_vec(vec![x[1], u[0]])
    }
    fn dynamics_jac_x(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> DMatrix<T> {
        DMatrix::from_row_slice(2, 2, &[T::zero(), T::one(), T::zero(), T::zero()])
    }
    fn dynamics_jac_u(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> DMatrix<T> {
        DMatrix::from_column_slice(2, 1, &[T::zero(), T::one()])
    }
    fn running_cost(&self, _x: &DVector<T>, u: &DVector<T>, _t: T) -> T {
        u[0] * u[0] * T::lit(0.5)
    }
    fn running_cost_grad_u(&self, _x: &DVector<T>, u: &DVector<T>, _t: T) -> DVector<T> {
        u.clone()
    }
    fn constraint(&self, x: &DVector<T>, _t: T) -> DVector<T> {
        x.clone()
    }
    fn constraint_jac_x(&self, _x: &DVector<T>, _t: T) -> DMatrix<T> {
        DMatrix::identity(2, 2)
    }
}

/// Gravity used by the brachistochrone.
pub const GRAVITY: f64 = 10.0;

/// Minimum-time descent to `(2, -2)`: state `[x, y, V]`,
/// `f = [V sin u, -V cos u, g cos u]`, `J = t_f`, free terminal time and
/// velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Brachistochrone;

impl<T: Real> OptimalControlProblem<T> for Brachistochrone {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn constraint_dim(&self) -> usize {
        2
    }
    fn initial_time(&self) -> T {
        T::zero()
    }
    fn initial_state(&self) -> DVector<T> {
        DVector::zeros(3)
    }
    fn terminal_time(&self) -> TerminalTime<T> {
        TerminalTime::Free
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, _t: T) -> DVector<T> {
        let (s, c) = u[0].sin_cos();
        let v = x[2];
        DVector::from_vec(vec![v * s, -v * c, T::lit(GRAVITY) * c])
    }
    fn dynamics_jac_x(&self, _x: &DVector<T>, u: &DVector<T>, _t: T) -> DMatrix<T> {
        let (s, c) = u[0].sin_cos();
        let z = T::zero();
        DMatrix::from_row_slice(3, 3, &[z, z, s, z, z, -c, z, z, z])
    }
    fn dynamics_jac_u(&self, x: &DVector<T>, u: &DVector<T>, _t: T) -> DMatrix<T> {
        let (s, c) = u[0].sin_cos();
        let v = x[2];
        DMatrix::from_column_slice(3, 1, &[v * c, v * s, -T::lit(GRAVITY) * s])
    }
    fn terminal_cost(&self, _x: &DVector<T>, t: T) -> T {
        t
    }
    fn terminal_cost_dt(&self, _x: &DVector<T>, _t: T) -> T {
        T::one()
    }
    fn constraint(&self, x: &DVector<T>, _t: T) -> DVector<T> {
        DVector::from_vec(vec![x[0] - T::lit(2.0), x[1] + T::lit(2.0)])
    }
    fn constraint_jac_x(&self, _x: &DVector<T>, _t: T) -> DMatrix<T> {
        let (z, o) = (T::zero(), T::one());
        DMatrix::from_row_slice(2, 3, &[o, z, z, z, o, z])
    }
}

pub fn double_integrator<T: Real>() -> ProblemModel<T> {
    ProblemModel::new(DoubleIntegrator).expect("double integrator is well formed")
}

pub fn brachistochrone<T: Real>() -> ProblemModel<T> {
    ProblemModel::new(Brachistochrone).expect("brachistochrone is well formed")
}

/// Closed forms of the double-integrator optimum.
pub mod double_integrator_optimum {
    pub const COST: f64 = 3.25;
    pub const MULTIPLIER: [f64; 2] = [3.0, -2.5];

    pub fn state(t: f64) -> [f64; 2] {
        [
            0.5 * t.powi(3) - 1.75 * t * t + t + 1.0,
            1.5 * t * t - 3.5 * t + 1.0,
        ]
    }

    pub fn control(t: f64) -> f64 {
        3.0 * t - 3.5
    }

    pub fn costate(t: f64) -> [f64; 2] {
        [3.0, -3.0 * t + 3.5]
    }
}

/// Reference values for the brachistochrone benchmark.
pub mod brachistochrone_reference {
    /// Minimum descent time from an independent collocation solver.
    pub const TERMINAL_TIME: f64 = 0.8165;
    /// Terminal time reached by variation evolution at `tau = 300`.
    pub const EVOLVED_TERMINAL_TIME: f64 = 0.8168;
    pub const MULTIPLIER: [f64; 2] = [-0.1477, 0.0564];
}

/// Samples the analytic double-integrator optimum on `nodes` points.
pub fn double_integrator_optimum_grid<T: Real>(nodes: usize) -> Result<TrajectoryGrid<T>> {
    let tf = 2.0;
    let mut x = DMatrix::zeros(2, nodes);
    let mut u = DMatrix::zeros(1, nodes);
    for i in 0..nodes {
        let t = tf * i as f64 / (nodes - 1) as f64;
        let s = double_integrator_optimum::state(t);
        x[(0, i)] = T::lit(s[0]);
        x[(1, i)] = T::lit(s[1]);
        u[(0, i)] = T::lit(double_integrator_optimum::control(t));
    }
    TrajectoryGrid::new(T::zero(), T::lit(tf), x, u)
}

/// Damping ratio of the feedback initializer.
pub const FEEDBACK_DAMPING: f64 = 0.707;

/// Time-varying natural frequency `omega_n(t) = 5 t` of the feedback initializer.
pub fn feedback_frequency<T: Real>(t: T) -> T {
    T::lit(5.0) * t
}

fn feedback_control<T: Real>(x: &DVector<T>, t: T) -> T {
    let w = feedback_frequency(t);
    -(w * w) * x[0] - T::lit(2.0 * FEEDBACK_DAMPING) * w * x[1]
}

/// Double-integrator start: closed loop `u = -w^2 x1 - 2 w xi x2`, `w = 5t`,
/// integrated with RK4 ([`INIT_SUBSTEPS`] per node interval).
pub fn init_feedback_double_integrator<T: Real>(nodes: usize) -> Result<TrajectoryGrid<T>> {
    if nodes < 3 {
        return Err(VemError::Config(format!(
            "need at least 3 nodes, got {nodes}"
        )));
    }
    let tf = T::lit(2.0);
    let h = tf / T::count(nodes - 1);
    let dt = h / T::count(INIT_SUBSTEPS);
    let rhs = |x: &DVector<T>, t: T| DVector::from_vec(vec![x[1], feedback_control(x, t)]);

    let mut x = DMatrix::zeros(2, nodes);
    let mut u = DMatrix::zeros(1, nodes);
    let mut state = DVector::from_element(2, T::one());
    x.set_column(0, &state);
    u[(0, 0)] = feedback_control(&state, T::zero());
    for i in 0..nodes - 1 {
        let t_start = h * T::count(i);
        for s in 0..INIT_SUBSTEPS {
            let t = t_start + dt * T::count(s);
            state = rk4_step(&rhs, &state, t, dt);
        }
        let t_node = h * T::count(i + 1);
        x.set_column(i + 1, &state);
        u[(0, i + 1)] = feedback_control(&state, t_node);
    }
    let miss = state.amax();
    if miss > T::lit(DEFAULT_FEASIBILITY_TOL) {
        log::warn!(
            "feedback initializer misses the terminal target by {:e}",
            miss.as_f64()
        );
    }
    TrajectoryGrid::new(T::zero(), tf, x, u)
}

/// Brachistochrone start: constant-angle slide along the straight line to the
/// target, `t_f = sqrt(0.8)`, `u = pi/4`, `x = 2.5 t^2`, `y = -2.5 t^2`,
/// `V = 5 sqrt(2) t`.
pub fn init_straightline_brachistochrone<T: Real>(nodes: usize) -> Result<TrajectoryGrid<T>> {
    if nodes < 3 {
        return Err(VemError::Config(format!(
            "need at least 3 nodes, got {nodes}"
        )));
    }
    let tf = T::lit(0.8).sqrt();
    let angle = T::FRAC_PI_4();
    let mut x = DMatrix::zeros(3, nodes);
    let u = DMatrix::from_element(1, nodes, angle);
    for i in 0..nodes {
        let t = tf * T::count(i) / T::count(nodes - 1);
        x[(0, i)] = T::lit(2.5) * t * t;
        x[(1, i)] = -T::lit(2.5) * t * t;
        x[(2, i)] = T::lit(5.0) * T::lit(2.0).sqrt() * t;
    }
    TrajectoryGrid::new(T::zero(), tf, x, u)
}

fn rk4_step<T: Real, F>(rhs: &F, y: &DVector<T>, t: T, dt: T) -> DVector<T>
where
    F: Fn(&DVector<T>, T) -> DVector<T>,
{
    let half = T::lit(0.5);
    let k1 = rhs(y, t);
    let k2 = rhs(&(y + &k1 * (half * dt)), t + half * dt);
    let k3 = rhs(&(y + &k2 * (half * dt)), t + half * dt);
    let k4 = rhs(&(y + &k3 * dt), t + dt);
    y + (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0))
}

/// Re-integrates the states from `x0` under the nodal controls `u`
/// (linearly interpolated in time) on the uniform grid of `[t0, tf]`.
pub fn integrate_states<T: Real>(
    problem: &ProblemModel<T>,
    tf: T,
    u: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let nodes = u.ncols();
    let t0 = problem.initial_time();
    let h = (tf - t0) / T::count(nodes - 1);
    let dt = h / T::count(INIT_SUBSTEPS);
    let mut x = DMatrix::zeros(problem.state_dim(), nodes);
    let mut state = problem.initial_state().clone();
    x.set_column(0, &state);
    for i in 0..nodes - 1 {
        let t_start = t0 + h * T::count(i);
        let (u0, u1) = (u.column(i).into_owned(), u.column(i + 1).into_owned());
        let rhs = |y: &DVector<T>, t: T| {
            let theta = (t - t_start) / h;
            let uc = &u0 * (T::one() - theta) + &u1 * theta;
            problem.inner().dynamics(y, &uc, t)
        };
        for s in 0..INIT_SUBSTEPS {
            let t = t_start + dt * T::count(s);
            state = rk4_step(&rhs, &state, t, dt);
        }
        if !state.iter().all(|v| v.finite()) {
            return Err(VemError::Evaluation {
                evaluator: "dynamics",
                node: Some(i + 1),
            });
        }
        x.set_column(i + 1, &state);
    }
    Ok(x)
}

/// Finite-difference estimate of the functional gradient `dJ/du_j(t_i)`.
///
/// Control component `j` at node `i` is bumped by a hat function of height
/// `+-bump`, the states are re-integrated from `x0` with `t_f` frozen, and the
/// central difference of the cost is divided by the trapezoidal mass of the
/// hat. The result is directly comparable with `p_u` at that node.
pub fn finite_difference_gradient_oracle<T: Real>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
    node: usize,
    component: usize,
    bump: T,
) -> Result<T> {
    let (plus, minus) = bumped_pair(problem, traj, node, component, bump, |tr| {
        crate::model::evaluate_cost(problem, tr).map(|j| DVector::from_element(1, j))
    })?;
    Ok((plus[0] - minus[0]) / (T::lit(2.0) * bump * hat_mass(traj, node)))
}

/// Finite-difference estimate of `dg(x(t_f), t_f)/du_j(t_i)` (length q), the
/// functional counterpart of `g_x Phi(t_f, t_i) f_u(t_i)` column `j`.
pub fn finite_difference_constraint_oracle<T: Real>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
    node: usize,
    component: usize,
    bump: T,
) -> Result<DVector<T>> {
    let last = traj.nodes() - 1;
    let (plus, minus) = bumped_pair(problem, traj, node, component, bump, |tr| {
        problem.constraint(&tr.state(last), tr.tf)
    })?;
    Ok((plus - minus) / (T::lit(2.0) * bump * hat_mass(traj, node)))
}

fn hat_mass<T: Real>(traj: &TrajectoryGrid<T>, node: usize) -> T {
    quadrature::trapezoid_weights(traj.nodes(), traj.step())[node]
}

fn bumped_pair<T: Real, F>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
    node: usize,
    component: usize,
    bump: T,
    measure: F,
) -> Result<(DVector<T>, DVector<T>)>
where
    F: Fn(&TrajectoryGrid<T>) -> Result<DVector<T>>,
{
    if node >= traj.nodes() || component >= traj.control_dim() {
        return Err(VemError::Config(format!(
            "probe ({node}, {component}) outside a {}x{} control grid",
            traj.control_dim(),
            traj.nodes()
        )));
    }
    if !(bump > T::zero()) {
        return Err(VemError::Config("bump size must be positive".into()));
    }
    let eval = |sign: T| -> Result<DVector<T>> {
        let mut u = traj.u.clone();
        u[(component, node)] += sign * bump;
        let x = integrate_states(problem, traj.tf, &u)?;
        let tr = TrajectoryGrid::new(traj.t0, traj.tf, x, u)?;
        measure(&tr)
    };
    Ok((eval(T::one())?, eval(-T::one())?))
}

/// The built-in benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProblem {
    DoubleIntegrator,
    Brachistochrone,
}

impl BuiltinProblem {
    pub fn model<T: Real>(self) -> ProblemModel<T> {
        match self {
            BuiltinProblem::DoubleIntegrator => double_integrator(),
            BuiltinProblem::Brachistochrone => brachistochrone(),
        }
    }

    /// Node counts used by the reference experiments.
    pub fn default_nodes(self) -> usize {
        match self {
            BuiltinProblem::DoubleIntegrator => 41,
            BuiltinProblem::Brachistochrone => 101,
        }
    }

    pub fn initial_trajectory<T: Real>(self, nodes: usize) -> Result<TrajectoryGrid<T>> {
        match self {
            BuiltinProblem::DoubleIntegrator => init_feedback_double_integrator(nodes),
            BuiltinProblem::Brachistochrone => init_straightline_brachistochrone(nodes),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinProblem::DoubleIntegrator => "double-integrator",
            BuiltinProblem::Brachistochrone => "brachistochrone",
        }
    }
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinProblem {
    type Err = VemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double-integrator" => Ok(BuiltinProblem::DoubleIntegrator),
            "brachistochrone" => Ok(BuiltinProblem::Brachistochrone),
            other => Err(VemError::Config(format!("unknown problem `{other}`"))),
        }
    }
}
