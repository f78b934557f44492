//! Nodal evaluation of every problem term the evolution rates need.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{ProblemModel, TrajectoryGrid};
use crate::scalar::Real;

/// All evaluator outputs along one trajectory snapshot.
///
/// Terminal-cost partials are evaluated along the trajectory at the local
/// time, i.e. `phi_x[i] = d phi / dx (x_i, t_i)`.
#[derive(Debug, Clone)]
pub struct Linearization<T: Real> {
    pub times: Vec<T>,
    pub h: T,
    pub tf: T,
    pub free_tf: bool,
    pub f: Vec<DVector<T>>,
    pub fx: Vec<DMatrix<T>>,
    pub fu: Vec<DMatrix<T>>,
    pub l: Vec<T>,
    pub lx: Vec<DVector<T>>,
    pub lu: Vec<DVector<T>>,
    pub phi_x: Vec<DVector<T>>,
    /// Inner integrand of the control gradient:
    /// `L_x + phi_tx + phi_xx^T f + f_x^T phi_x`.
    pub w: Vec<DVector<T>>,
    /// `phi_t` at the terminal node.
    pub phi_t_final: T,
    pub g: DVector<T>,
    pub g_x: DMatrix<T>,
    pub g_t: DVector<T>,
}

impl<T: Real> Linearization<T> {
    pub fn evaluate(problem: &ProblemModel<T>, traj: &TrajectoryGrid<T>) -> Result<Self> {
        traj.validate_dims(problem)?;
        let nodes = traj.nodes();
        let times = traj.times();
        let mut lin = Linearization {
            h: traj.step(),
            tf: traj.tf,
            free_tf: problem.terminal_time().is_free(),
            f: Vec::with_capacity(nodes),
            fx: Vec::with_capacity(nodes),
            fu: Vec::with_capacity(nodes),
            l: Vec::with_capacity(nodes),
            lx: Vec::with_capacity(nodes),
            lu: Vec::with_capacity(nodes),
            phi_x: Vec::with_capacity(nodes),
            w: Vec::with_capacity(nodes),
            phi_t_final: T::zero(),
            g: DVector::zeros(0),
            g_x: DMatrix::zeros(0, problem.state_dim()),
            g_t: DVector::zeros(0),
            times,
        };
        for i in 0..nodes {
            let (x, u, t) = (traj.state(i), traj.control(i), lin.times[i]);
            let node = |e: crate::error::VemError| e.at_node(i);
            let f = problem.dynamics(&x, &u, t).map_err(node)?;
            let fx = problem.dynamics_jac_x(&x, &u, t).map_err(node)?;
            let fu = problem.dynamics_jac_u(&x, &u, t).map_err(node)?;
            let l = problem.running_cost(&x, &u, t).map_err(node)?;
            let lx = problem.running_cost_grad_x(&x, &u, t).map_err(node)?;
            let lu = problem.running_cost_grad_u(&x, &u, t).map_err(node)?;
            let phi_x = problem.terminal_cost_grad_x(&x, t).map_err(node)?;
            let phi_tx = problem.terminal_cost_dtx(&x, t).map_err(node)?;
            let phi_xx = problem.terminal_cost_hess_x(&x, t).map_err(node)?;
            let w = &lx + phi_tx + phi_xx.tr_mul(&f) + fx.tr_mul(&phi_x);
            lin.f.push(f);
            lin.fx.push(fx);
            lin.fu.push(fu);
            lin.l.push(l);
            lin.lx.push(lx);
            lin.lu.push(lu);
            lin.phi_x.push(phi_x);
            lin.w.push(w);
        }
        let xf = traj.state(nodes - 1);
        lin.phi_t_final = problem.terminal_cost_dt(&xf, traj.tf)?;
        if problem.constraint_dim() > 0 {
            lin.g = problem.constraint(&xf, traj.tf)?;
            lin.g_x = problem.constraint_jac_x(&xf, traj.tf)?;
            lin.g_t = problem.constraint_dt(&xf, traj.tf)?;
        }
        Ok(lin)
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn state_dim(&self) -> usize {
        self.fx[0].nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.fu[0].ncols()
    }

    pub fn constraint_dim(&self) -> usize {
        self.g.len()
    }

    pub fn last(&self) -> usize {
        self.nodes() - 1
    }

    /// `phi_t + phi_x^T f + L` at the terminal node.
    pub fn terminal_rate(&self) -> T {
        let k = self.last();
        self.phi_t_final + self.phi_x[k].dot(&self.f[k]) + self.l[k]
    }

    /// `g_x f + g_t` at the terminal node.
    pub fn constraint_time_rate(&self) -> DVector<T> {
        &self.g_x * &self.f[self.last()] + &self.g_t
    }
}
