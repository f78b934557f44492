//! State transition matrices of the dynamics linearized along a trajectory.
//!
//! Only the fundamental matrices `Psi_i = Phi(t_i, t0)` and their inverses are
//! stored; any `Phi(t_i, t_j)` is formed as `Psi_i * Psi_j^-1`.

use nalgebra::DMatrix;

use crate::error::{Result, VemError};
use crate::linearization::Linearization;
use crate::model::{ProblemModel, TrajectoryGrid};
use crate::scalar::Real;

/// Condition-number ceiling for the fundamental matrices.
pub const MAX_CONDITION: f64 = 1e12;

/// RK4 substeps per node interval.
pub(crate) const SUBSTEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct TransitionSet<T: Real> {
    psi: Vec<DMatrix<T>>,
    psi_inv: Vec<DMatrix<T>>,
    cond_max: T,
}

/// `A(t)` linearly interpolated between nodes `i` and `i + 1`, `theta` in `[0, 1]`.
pub(crate) fn lerp<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, theta: T) -> DMatrix<T> {
    a * (T::one() - theta) + b * theta
}

fn one_norm<T: Real>(a: &DMatrix<T>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), |m, v| m.max(v))
}

impl<T: Real> TransitionSet<T> {
    /// Integrates `dPsi/dt = f_x(t) Psi`, `Psi(t0) = I` node to node with RK4.
    pub fn build(lin: &Linearization<T>) -> Result<Self> {
        let n = lin.state_dim();
        let nodes = lin.nodes();
        let eye = DMatrix::<T>::identity(n, n);
        let dt = lin.h / T::count(SUBSTEPS);
        let half = T::lit(0.5);
        let sixth = T::one() / T::lit(6.0);

        let mut psi = Vec::with_capacity(nodes);
        psi.push(eye.clone());
        for i in 0..nodes - 1 {
            let (a0, a1) = (&lin.fx[i], &lin.fx[i + 1]);
            let mut y = psi[i].clone();
            for s in 0..SUBSTEPS {
                let th = T::count(s) / T::count(SUBSTEPS);
                let dth = T::one() / T::count(SUBSTEPS);
                let a_start = lerp(a0, a1, th);
                let a_mid = lerp(a0, a1, th + half * dth);
                let a_end = lerp(a0, a1, th + dth);
                let k1 = &a_start * &y;
                let k2 = &a_mid * (&y + &k1 * (half * dt));
                let k3 = &a_mid * (&y + &k2 * (half * dt));
                let k4 = &a_end * (&y + &k3 * dt);
                y += (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt * sixth);
            }
            psi.push(y);
        }

        let tol = T::lit(1e-8).max(T::default_epsilon() * T::lit(1e4));
        let mut psi_inv = Vec::with_capacity(nodes);
        psi_inv.push(eye.clone());
        let mut cond_max = T::one();
        for (i, p) in psi.iter().enumerate().skip(1) {
            let inv = p
                .clone()
                .lu()
                .try_inverse()
                .ok_or(VemError::TransitionConditioning {
                    node: i,
                    condition: f64::INFINITY,
                })?;
            let cond = one_norm(p) * one_norm(&inv);
            if !cond.finite() || cond > T::lit(MAX_CONDITION) {
                return Err(VemError::TransitionConditioning {
                    node: i,
                    condition: cond.as_f64(),
                });
            }
            if (p * &inv - &eye).amax() > tol {
                return Err(VemError::TransitionConditioning {
                    node: i,
                    condition: cond.as_f64(),
                });
            }
            cond_max = cond_max.max(cond);
            psi_inv.push(inv);
        }
        Ok(TransitionSet {
            psi,
            psi_inv,
            cond_max,
        })
    }

    pub fn nodes(&self) -> usize {
        self.psi.len()
    }

    /// `Phi(t_i, t0)`.
    pub fn fundamental(&self, i: usize) -> &DMatrix<T> {
        &self.psi[i]
    }

    /// `Phi(t_i, t0)^-1 = Phi(t0, t_i)`.
    pub fn fundamental_inv(&self, i: usize) -> &DMatrix<T> {
        &self.psi_inv[i]
    }

    pub fn cond_max(&self) -> T {
        self.cond_max
    }

    /// `Phi(t_i, t_j)`. The diagonal `i == j` is the identity exactly.
    pub fn transition(&self, i: usize, j: usize) -> DMatrix<T> {
        assert!(
            i < self.nodes() && j < self.nodes(),
            "node index out of range ({i}, {j}) for {} nodes",
            self.nodes()
        );
        if i == j {
            let n = self.psi[0].nrows();
            return DMatrix::identity(n, n);
        }
        &self.psi[i] * &self.psi_inv[j]
    }

    /// `Phi(t_f, t_i)`.
    pub fn to_final(&self, i: usize) -> DMatrix<T> {
        self.transition(self.nodes() - 1, i)
    }
}

pub fn build_transition_set<T: Real>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
) -> Result<TransitionSet<T>> {
    TransitionSet::build(&Linearization::evaluate(problem, traj)?)
}
