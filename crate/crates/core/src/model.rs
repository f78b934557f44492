//! Problem authoring interface and the discretized trajectory.
//!
//! A problem is described by implementing [`OptimalControlProblem`]: dynamics
//! `f(x, u, t)`, running cost `L(x, u, t)`, terminal cost `phi(x, t)` and the
//! terminal constraint `g(x(t_f), t_f) = 0`, together with their partial
//! derivatives. The trait is wrapped by [`ProblemModel`], which validates the
//! reported shapes once and checks every evaluation for non-finite output.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VemError};
use crate::quadrature;
use crate::scalar::Real;

/// Whether the terminal time is a decision variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalTime<T> {
    Free,
    Fixed(T),
}

impl<T> TerminalTime<T> {
    pub fn is_free(&self) -> bool {
        matches!(self, TerminalTime::Free)
    }
}

/// User-supplied optimal control problem with exact partial derivatives.
///
/// Cost and constraint terms default to zero, so a problem only overrides
/// what it actually uses. All evaluators must be pure.
pub trait OptimalControlProblem<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Number of terminal constraints; zero means free terminal state.
    fn constraint_dim(&self) -> usize {
        0
    }
    fn initial_time(&self) -> T;
    fn initial_state(&self) -> DVector<T>;
    fn terminal_time(&self) -> TerminalTime<T>;

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DVector<T>;
    /// `df/dx`, n x n.
    fn dynamics_jac_x(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DMatrix<T>;
    /// `df/du`, n x m.
    fn dynamics_jac_u(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DMatrix<T>;

    fn running_cost(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> T {
        T::zero()
    }
    fn running_cost_grad_x(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.state_dim())
    }
    fn running_cost_grad_u(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.control_dim())
    }

    fn terminal_cost(&self, _x: &DVector<T>, _t: T) -> T {
        T::zero()
    }
    fn terminal_cost_grad_x(&self, _x: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.state_dim())
    }
    fn terminal_cost_dt(&self, _x: &DVector<T>, _t: T) -> T {
        T::zero()
    }
    /// Mixed partial `d^2 phi / dt dx`, length n.
    fn terminal_cost_dtx(&self, _x: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.state_dim())
    }
    fn terminal_cost_hess_x(&self, _x: &DVector<T>, _t: T) -> DMatrix<T> {
        DMatrix::zeros(self.state_dim(), self.state_dim())
    }

    fn constraint(&self, _x: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.constraint_dim())
    }
    /// `dg/dx`, q x n.
    fn constraint_jac_x(&self, _x: &DVector<T>, _t: T) -> DMatrix<T> {
        DMatrix::zeros(self.constraint_dim(), self.state_dim())
    }
    fn constraint_dt(&self, _x: &DVector<T>, _t: T) -> DVector<T> {
        DVector::zeros(self.constraint_dim())
    }
}

/// A registered problem: shapes verified, evaluations finiteness-checked.
#[derive(Clone)]
pub struct ProblemModel<T: Real> {
    inner: Arc<dyn OptimalControlProblem<T>>,
    n: usize,
    m: usize,
    q: usize,
    t0: T,
    x0: DVector<T>,
    terminal_time: TerminalTime<T>,
}

impl<T: Real> fmt::Debug for ProblemModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.q)
            .field("t0", &self.t0)
            .field("x0", &self.x0.as_slice())
            .field("terminal_time", &self.terminal_time)
            .finish()
    }
}

fn check_vec<T: Real>(name: &'static str, v: DVector<T>, len: usize) -> Result<DVector<T>> {
    if v.len() != len {
        return Err(VemError::Shape {
            evaluator: name,
            expected: (len, 1),
            got: (v.len(), 1),
        });
    }
    finite_vec(name, v)
}

fn check_mat<T: Real>(
    name: &'static str,
    a: DMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<T>> {
    if a.shape() != (rows, cols) {
        return Err(VemError::Shape {
            evaluator: name,
            expected: (rows, cols),
            got: a.shape(),
        });
    }
    finite_mat(name, a)
}

fn finite_vec<T: Real>(name: &'static str, v: DVector<T>) -> Result<DVector<T>> {
    if v.iter().all(|x| x.finite()) {
        Ok(v)
    } else {
        Err(VemError::Evaluation {
            evaluator: name,
            node: None,
        })
    }
}

fn finite_mat<T: Real>(name: &'static str, a: DMatrix<T>) -> Result<DMatrix<T>> {
    if a.iter().all(|x| x.finite()) {
        Ok(a)
    } else {
        Err(VemError::Evaluation {
            evaluator: name,
            node: None,
        })
    }
}

fn finite_scalar<T: Real>(name: &'static str, v: T) -> Result<T> {
    if v.finite() {
        Ok(v)
    } else {
        Err(VemError::Evaluation {
            evaluator: name,
            node: None,
        })
    }
}

impl<T: Real> ProblemModel<T> {
    /// Registers a problem, probing every evaluator once at `(x0, 0, t0)` to
    /// verify output shapes and finiteness.
    pub fn new<P: OptimalControlProblem<T> + 'static>(problem: P) -> Result<Self> {
        Self::from_arc(Arc::new(problem))
    }

    pub fn from_arc(inner: Arc<dyn OptimalControlProblem<T>>) -> Result<Self> {
        let (n, m, q) = (
            inner.state_dim(),
            inner.control_dim(),
            inner.constraint_dim(),
        );
        if n == 0 || m == 0 {
            return Err(VemError::Config(format!(
                "state and control dimensions must be positive (n = {n}, m = {m})"
            )));
        }
        let t0 = inner.initial_time();
        let x0 = check_vec("initial_state", inner.initial_state(), n)?;
        let terminal_time = inner.terminal_time();
        if let TerminalTime::Fixed(tf) = terminal_time {
            if !(tf > t0) {
                return Err(VemError::Config(format!(
                    "fixed terminal time {tf:?} must exceed the initial time {t0:?}"
                )));
            }
        }
        let model = ProblemModel {
            inner,
            n,
            m,
            q,
            t0,
            x0,
            terminal_time,
        };
        model.probe()?;
        Ok(model)
    }

    fn probe(&self) -> Result<()> {
        let x = &self.x0;
        let u = DVector::zeros(self.m);
        let t = self.t0;
        let p = &self.inner;
        check_vec("dynamics", p.dynamics(x, &u, t), self.n)?;
        check_mat("dynamics_jac_x", p.dynamics_jac_x(x, &u, t), self.n, self.n)?;
        check_mat("dynamics_jac_u", p.dynamics_jac_u(x, &u, t), self.n, self.m)?;
        finite_scalar("running_cost", p.running_cost(x, &u, t))?;
        check_vec(
            "running_cost_grad_x",
            p.running_cost_grad_x(x, &u, t),
            self.n,
        )?;
        check_vec(
            "running_cost_grad_u",
            p.running_cost_grad_u(x, &u, t),
            self.m,
        )?;
        finite_scalar("terminal_cost", p.terminal_cost(x, t))?;
        check_vec("terminal_cost_grad_x", p.terminal_cost_grad_x(x, t), self.n)?;
        finite_scalar("terminal_cost_dt", p.terminal_cost_dt(x, t))?;
        check_vec("terminal_cost_dtx", p.terminal_cost_dtx(x, t), self.n)?;
        check_mat(
            "terminal_cost_hess_x",
            p.terminal_cost_hess_x(x, t),
            self.n,
            self.n,
        )?;
        check_vec("constraint", p.constraint(x, t), self.q)?;
        check_mat("constraint_jac_x", p.constraint_jac_x(x, t), self.q, self.n)?;
        check_vec("constraint_dt", p.constraint_dt(x, t), self.q)?;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn control_dim(&self) -> usize {
        self.m
    }
    pub fn constraint_dim(&self) -> usize {
        self.q
    }
    pub fn initial_time(&self) -> T {
        self.t0
    }
    pub fn initial_state(&self) -> &DVector<T> {
        &self.x0
    }
    pub fn terminal_time(&self) -> TerminalTime<T> {
        self.terminal_time
    }

    /// Borrow the underlying user problem.
    pub fn inner(&self) -> &dyn OptimalControlProblem<T> {
        self.inner.as_ref()
    }

    pub fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec("dynamics", self.inner.dynamics(x, u, t))
    }
    pub fn dynamics_jac_x(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        finite_mat("dynamics_jac_x", self.inner.dynamics_jac_x(x, u, t))
    }
    pub fn dynamics_jac_u(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        finite_mat("dynamics_jac_u", self.inner.dynamics_jac_u(x, u, t))
    }
    pub fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<T> {
        finite_scalar("running_cost", self.inner.running_cost(x, u, t))
    }
    pub fn running_cost_grad_x(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec(
            "running_cost_grad_x",
            self.inner.running_cost_grad_x(x, u, t),
        )
    }
    pub fn running_cost_grad_u(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec(
            "running_cost_grad_u",
            self.inner.running_cost_grad_u(x, u, t),
        )
    }
    pub fn terminal_cost(&self, x: &DVector<T>, t: T) -> Result<T> {
        finite_scalar("terminal_cost", self.inner.terminal_cost(x, t))
    }
    pub fn terminal_cost_grad_x(&self, x: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec(
            "terminal_cost_grad_x",
            self.inner.terminal_cost_grad_x(x, t),
        )
    }
    pub fn terminal_cost_dt(&self, x: &DVector<T>, t: T) -> Result<T> {
        finite_scalar("terminal_cost_dt", self.inner.terminal_cost_dt(x, t))
    }
    pub fn terminal_cost_dtx(&self, x: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec("terminal_cost_dtx", self.inner.terminal_cost_dtx(x, t))
    }
    pub fn terminal_cost_hess_x(&self, x: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        finite_mat(
            "terminal_cost_hess_x",
            self.inner.terminal_cost_hess_x(x, t),
        )
    }
    pub fn constraint(&self, x: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec("constraint", self.inner.constraint(x, t))
    }
    pub fn constraint_jac_x(&self, x: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        finite_mat("constraint_jac_x", self.inner.constraint_jac_x(x, t))
    }
    pub fn constraint_dt(&self, x: &DVector<T>, t: T) -> Result<DVector<T>> {
        finite_vec("constraint_dt", self.inner.constraint_dt(x, t))
    }
}

/// Default lower bound on `t_f - t0`.
pub const DEFAULT_TF_FLOOR: f64 = 1e-6;

/// States and controls sampled on `N` uniformly spaced nodes of `[t0, t_f]`.
///
/// Column `i` of `x` (n x N) and `u` (m x N) holds the values at
/// `t_i = t0 + i / (N - 1) * (t_f - t0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGrid<T: Real> {
    pub t0: T,
    pub tf: T,
    pub x: DMatrix<T>,
    pub u: DMatrix<T>,
}

impl<T: Real> TrajectoryGrid<T> {
    pub fn new(t0: T, tf: T, x: DMatrix<T>, u: DMatrix<T>) -> Result<Self> {
        let traj = TrajectoryGrid { t0, tf, x, u };
        traj.check_shape()?;
        Ok(traj)
    }

    fn check_shape(&self) -> Result<()> {
        if self.x.ncols() != self.u.ncols() {
            return Err(VemError::Config(format!(
                "state has {} nodes but control has {}",
                self.x.ncols(),
                self.u.ncols()
            )));
        }
        if self.x.ncols() < 3 {
            return Err(VemError::Config(format!(
                "a trajectory needs at least 3 nodes, got {}",
                self.x.ncols()
            )));
        }
        if !(self.tf - self.t0 > T::lit(DEFAULT_TF_FLOOR)) {
            return Err(VemError::Config(format!(
                "terminal time {:?} is not beyond t0 = {:?}",
                self.tf, self.t0
            )));
        }
        Ok(())
    }

    /// Checks dimensions against a problem and the pinned initial state.
    pub fn validate(&self, problem: &ProblemModel<T>) -> Result<()> {
        self.check_shape()?;
        if self.x.nrows() != problem.state_dim() || self.u.nrows() != problem.control_dim() {
            return Err(VemError::Config(format!(
                "trajectory is {}x{} / {}x{}, problem has n = {}, m = {}",
                self.x.nrows(),
                self.x.ncols(),
                self.u.nrows(),
                self.u.ncols(),
                problem.state_dim(),
                problem.control_dim()
            )));
        }
        if self.t0 != problem.initial_time() {
            return Err(VemError::Config(
                "trajectory t0 differs from problem t0".into(),
            ));
        }
        if self.x.column(0) != problem.initial_state().column(0) {
            return Err(VemError::Config(
                "first trajectory node does not equal the initial state".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.x.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.u.nrows()
    }

    /// Uniform node spacing.
    pub fn step(&self) -> T {
        (self.tf - self.t0) / T::count(self.nodes() - 1)
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + (self.tf - self.t0) * T::count(i) / T::count(self.nodes() - 1)
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.nodes()).map(|i| self.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> DVector<T> {
        self.x.column(i).into_owned()
    }

    pub fn control(&self, i: usize) -> DVector<T> {
        self.u.column(i).into_owned()
    }
}

/// Evolution gains: `K` (m x m, symmetric positive definite) scales the
/// control rate and `k_tf > 0` the terminal-time rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainConfig<T: Real> {
    k: DMatrix<T>,
    k_tf: T,
}

impl<T: Real> GainConfig<T> {
    pub fn new(k: DMatrix<T>, k_tf: T) -> Result<Self> {
        if !k.is_square() {
            return Err(VemError::Config(format!(
                "K must be square, got {:?}",
                k.shape()
            )));
        }
        let scale = k.amax().max(T::one());
        let asym = (&k - k.transpose()).amax();
        if asym > T::default_epsilon() * T::lit(100.0) * scale {
            return Err(VemError::Config("K is not symmetric".into()));
        }
        if k.clone().cholesky().is_none() {
            return Err(VemError::Config("K is not positive definite".into()));
        }
        if !(k_tf > T::zero()) || !k_tf.finite() {
            return Err(VemError::Config(format!(
                "k_tf must be positive, got {k_tf:?}"
            )));
        }
        Ok(GainConfig { k, k_tf })
    }

    /// `K = scale * I`.
    pub fn scaled_identity(m: usize, scale: T, k_tf: T) -> Result<Self> {
        Self::new(DMatrix::identity(m, m) * scale, k_tf)
    }

    pub fn k(&self) -> &DMatrix<T> {
        &self.k
    }

    pub fn k_tf(&self) -> T {
        self.k_tf
    }
}

/// Bolza cost: `phi(x_N, t_f)` plus the trapezoidal quadrature of `L` over
/// the nodes.
pub fn evaluate_cost<T: Real>(problem: &ProblemModel<T>, traj: &TrajectoryGrid<T>) -> Result<T> {
    traj.validate_dims(problem)?;
    let nodes = traj.nodes();
    let mut running = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let l = problem
            .running_cost(&traj.state(i), &traj.control(i), traj.time(i))
            .map_err(|e| e.at_node(i))?;
        running.push(l);
    }
    let terminal = problem
        .terminal_cost(&traj.state(nodes - 1), traj.tf)
        .map_err(|e| e.at_node(nodes - 1))?;
    Ok(terminal + quadrature::trapezoid(&running, traj.step()))
}

/// Distance of a trajectory from the feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityResidual<T> {
    /// Max over interior nodes of `|central difference of x - f|_inf`.
    pub dynamics: T,
    /// `|g(x_N, t_f)|_inf`, zero without terminal constraints.
    pub constraint: T,
}

impl<T: Real> FeasibilityResidual<T> {
    pub fn max(&self) -> T {
        self.dynamics.max(self.constraint)
    }
}

pub fn feasibility_residual<T: Real>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
) -> Result<FeasibilityResidual<T>> {
    traj.validate_dims(problem)?;
    let nodes = traj.nodes();
    let two_h = traj.step() * T::lit(2.0);
    let mut dynamics = T::zero();
    for i in 1..nodes - 1 {
        let f = problem
            .dynamics(&traj.state(i), &traj.control(i), traj.time(i))
            .map_err(|e| e.at_node(i))?;
        let diff = (traj.x.column(i + 1) - traj.x.column(i - 1)) / two_h - f;
        dynamics = dynamics.max(diff.amax());
    }
    let constraint = if problem.constraint_dim() == 0 {
        T::zero()
    } else {
        problem.constraint(&traj.state(nodes - 1), traj.tf)?.amax()
    };
    Ok(FeasibilityResidual {
        dynamics,
        constraint,
    })
}

impl<T: Real> TrajectoryGrid<T> {
    pub(crate) fn validate_dims(&self, problem: &ProblemModel<T>) -> Result<()> {
        if self.x.nrows() != problem.state_dim() || self.u.nrows() != problem.control_dim() {
            return Err(VemError::Config(format!(
                "trajectory dimensions ({}, {}) do not match problem ({}, {})",
                self.x.nrows(),
                self.u.nrows(),
                problem.state_dim(),
                problem.control_dim()
            )));
        }
        self.check_shape()
    }
}

impl VemError {
    pub(crate) fn at_node(self, i: usize) -> Self {
        match self {
            VemError::Evaluation { evaluator, .. } => VemError::Evaluation {
                evaluator,
                node: Some(i),
            },
            other => other,
        }
    }
}
