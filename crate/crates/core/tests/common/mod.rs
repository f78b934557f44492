#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use varevo::prelude::*;

/// `x' = A x + B u`, zero cost, fixed horizon, no terminal constraint.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub tf: f64,
}

impl OptimalControlProblem<f64> for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn initial_time(&self) -> f64 {
        0.0
    }
    fn initial_state(&self) -> DVector<f64> {
        DVector::from_element(self.a.nrows(), 1.0)
    }
    fn terminal_time(&self) -> TerminalTime<f64> {
        TerminalTime::Fixed(self.tf)
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn dynamics_jac_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.a.clone()
    }
    fn dynamics_jac_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.b.clone()
    }
}

/// Samples the free response `x(t) = exp(A t) x0` of a linear system with zero control.
pub fn free_response(sys: &LinearSystem, nodes: usize) -> Trajectory {
    let n = sys.a.nrows();
    let x0 = DVector::from_element(n, 1.0);
    let mut x = DMatrix::zeros(n, nodes);
    for i in 0..nodes {
        let t = sys.tf * i as f64 / (nodes - 1) as f64;
        x.set_column(i, &((&sys.a * t).exp() * &x0));
    }
    Trajectory::new(0.0, sys.tf, x, DMatrix::zeros(sys.b.ncols(), nodes)).unwrap()
}

/// Scalar problem with curved costate:
/// `x' = -x^2/2 + u`, `L = (x^2 + u^2)/2`, `phi = x^2/2 + t x`, `x(0) = 1`,
/// `t_f = 1`, free terminal state.
#[derive(Debug, Clone, Copy)]
pub struct CurvedScalar;

impl OptimalControlProblem<f64> for CurvedScalar {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn initial_time(&self) -> f64 {
        0.0
    }
    fn initial_state(&self) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn terminal_time(&self) -> TerminalTime<f64> {
        TerminalTime::Fixed(1.0)
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, -0.5 * x[0] * x[0] + u[0])
    }
    fn dynamics_jac_x(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -x[0])
    }
    fn dynamics_jac_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> f64 {
        0.5 * (x[0] * x[0] + u[0] * u[0])
    }
    fn running_cost_grad_x(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        x.clone()
    }
    fn running_cost_grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        u.clone()
    }
    fn terminal_cost(&self, x: &DVector<f64>, t: f64) -> f64 {
        0.5 * x[0] * x[0] + t * x[0]
    }
    fn terminal_cost_grad_x(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_element(1, x[0] + t)
    }
    fn terminal_cost_dt(&self, x: &DVector<f64>, _t: f64) -> f64 {
        x[0]
    }
    fn terminal_cost_dtx(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn terminal_cost_hess_x(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
}

/// Exact zero-control trajectory of [`CurvedScalar`]: `x = 2 / (2 + t)`.
pub fn curved_uncontrolled(nodes: usize) -> Trajectory {
    let x = DMatrix::from_fn(1, nodes, |_, i| {
        let t = i as f64 / (nodes - 1) as f64;
        2.0 / (2.0 + t)
    });
    Trajectory::new(0.0, 1.0, x, DMatrix::zeros(1, nodes)).unwrap()
}

/// Brachistochrone with the terminal constraint removed.
#[derive(Debug, Clone, Copy)]
pub struct UnconstrainedBrachistochrone;

impl OptimalControlProblem<f64> for UnconstrainedBrachistochrone {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn initial_time(&self) -> f64 {
        0.0
    }
    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn terminal_time(&self) -> TerminalTime<f64> {
        TerminalTime::Free
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        problems::Brachistochrone.dynamics(x, u, t)
    }
    fn dynamics_jac_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        problems::Brachistochrone.dynamics_jac_x(x, u, t)
    }
    fn dynamics_jac_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        problems::Brachistochrone.dynamics_jac_u(x, u, t)
    }
    fn terminal_cost(&self, _x: &DVector<f64>, t: f64) -> f64 {
        t
    }
    fn terminal_cost_dt(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        1.0
    }
}
