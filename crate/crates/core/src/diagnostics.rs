//! Optimality diagnostics: costate-free residuals, the analytic costate
//! reconstruction, classical-condition cross-checks and the gain-independent
//! stationarity system for the multiplier.
//!
//! The costate is rebuilt from primal quantities only:
//!
//! ```text
//! gamma(t) = phi_x(t) + Phi^T(t_f, t) g_x^T pi + int_t^tf Phi^T(s, t) w(s) ds
//! ```
//!
//! with the same integrand `w` as the control gradient. These routines never
//! feed back into the evolution.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linearization::Linearization;
use crate::model::{ProblemModel, TrajectoryGrid};
use crate::quadrature;
use crate::scalar::Real;
use crate::transition::TransitionSet;
use crate::variation::{
    compute_gradient_field, constraint_sensitivities, control_residual, GradientField,
    MultiplierSystem,
};

#[derive(Debug, Clone)]
pub struct CostateTrajectory<T: Real> {
    /// n x N.
    pub gamma: DMatrix<T>,
    /// Multiplier adjoining the terminal constraint (the evolution's `pi`).
    pub pi: DVector<T>,
    /// Hamiltonian `L + gamma^T f` at every node.
    pub hamiltonian: DVector<T>,
}

/// Evaluates the costate expression at every node, reusing the tail
/// integrals of the control gradient.
pub fn reconstruct_costates<T: Real>(
    lin: &Linearization<T>,
    ts: &TransitionSet<T>,
    gf: &GradientField<T>,
    pi: &DVector<T>,
) -> CostateTrajectory<T> {
    let nodes = lin.nodes();
    let n = lin.state_dim();
    let mut gamma = DMatrix::zeros(n, nodes);
    let mut hamiltonian = DVector::zeros(nodes);
    let adjoined = if pi.is_empty() {
        DVector::zeros(n)
    } else {
        lin.g_x.tr_mul(pi)
    };
    for i in 0..nodes {
        let mut g = &lin.phi_x[i] + gf.tail.column(i);
        if !pi.is_empty() {
            g += ts.to_final(i).tr_mul(&adjoined);
        }
        hamiltonian[i] = lin.l[i] + g.dot(&lin.f[i]);
        gamma.set_column(i, &g);
    }
    CostateTrajectory {
        gamma,
        pi: pi.clone(),
        hamiltonian,
    }
}

/// Convenience wrapper evaluating everything from a problem and trajectory.
pub fn reconstruct_costates_for<T: Real>(
    problem: &ProblemModel<T>,
    traj: &TrajectoryGrid<T>,
    pi: &DVector<T>,
) -> Result<CostateTrajectory<T>> {
    let lin = Linearization::evaluate(problem, traj)?;
    let ts = TransitionSet::build(&lin)?;
    let gf = compute_gradient_field(&lin, &ts);
    Ok(reconstruct_costates(&lin, &ts, &gf, pi))
}

/// `(max_i |p_u + B_i^T pi|_inf, |terminal-time residual|)`; the second is
/// zero with a fixed terminal time.
pub fn optimality_residuals<T: Real>(
    lin: &Linearization<T>,
    gf: &GradientField<T>,
    ms: &MultiplierSystem<T>,
) -> (T, T) {
    let res_u = control_residual(gf, ms).amax();
    let res_tf = if lin.free_tf {
        crate::variation::terminal_time_residual(lin, ms).abs()
    } else {
        T::zero()
    };
    (res_u, res_tf)
}

/// Residuals of the classical first-order conditions evaluated with the
/// reconstructed costate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalConditionReport<T> {
    /// `max |d gamma/dt + L_x + f_x^T gamma|_inf` over interior nodes
    /// (central differences).
    pub costate_ode: T,
    /// `max |L_u + f_u^T gamma|_inf` over all nodes.
    pub hamiltonian_u: T,
    /// `|H(t_f) + phi_t + pi^T g_t|`; `None` with fixed terminal time.
    pub transversality_time: Option<T>,
    /// `|gamma(t_f) - phi_x - g_x^T pi|_inf`.
    pub transversality_state: T,
}

pub fn classical_condition_check<T: Real>(
    lin: &Linearization<T>,
    ct: &CostateTrajectory<T>,
) -> ClassicalConditionReport<T> {
    let nodes = lin.nodes();
    let two_h = lin.h * T::lit(2.0);
    let mut costate_ode = T::zero();
    for i in 1..nodes - 1 {
        let d = (ct.gamma.column(i + 1) - ct.gamma.column(i - 1)) / two_h;
        let r = d + &lin.lx[i] + lin.fx[i].tr_mul(&ct.gamma.column(i));
        costate_ode = costate_ode.max(r.amax());
    }
    let mut hamiltonian_u = T::zero();
    for i in 0..nodes {
        let r = &lin.lu[i] + lin.fu[i].tr_mul(&ct.gamma.column(i));
        hamiltonian_u = hamiltonian_u.max(r.amax());
    }
    let last = nodes - 1;
    let has_pi = !ct.pi.is_empty();
    let transversality_time = lin.free_tf.then(|| {
        let mut v = ct.hamiltonian[last] + lin.phi_t_final;
        if has_pi {
            v += ct.pi.dot(&lin.g_t);
        }
        v.abs()
    });
    let mut end = ct.gamma.column(last) - &lin.phi_x[last];
    if has_pi {
        end -= lin.g_x.tr_mul(&ct.pi);
    }
    ClassicalConditionReport {
        costate_ode,
        hamiltonian_u,
        transversality_time,
        transversality_state: end.amax(),
    }
}

/// `max_i |(L_u + f_u^T gamma) - (p_u + B_i^T pi)|_inf`: the two forms of
/// the control stationarity condition agree up to rounding.
pub fn costate_bridge_residual<T: Real>(
    lin: &Linearization<T>,
    gf: &GradientField<T>,
    ms: &MultiplierSystem<T>,
    ct: &CostateTrajectory<T>,
) -> T {
    let e = control_residual(gf, ms);
    (0..lin.nodes())
        .map(|i| {
            let h_u = &lin.lu[i] + lin.fu[i].tr_mul(&ct.gamma.column(i));
            (h_u - e.column(i)).amax()
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// Residual of the stacked gain-free system `[M_s1; M_s2] pi = -[r_s1; r_s2]`
/// that the optimal multiplier satisfies, normalized by `1 + |r_s|_inf`.
/// The `M_s2` / `r_s2` block is present only with a free terminal time.
pub fn stationarity_check<T: Real>(
    lin: &Linearization<T>,
    ts: &TransitionSet<T>,
    gf: &GradientField<T>,
    pi: &DVector<T>,
) -> T {
    let q = lin.constraint_dim();
    if q == 0 {
        return T::zero();
    }
    let sens = constraint_sensitivities(lin, ts);
    let weights = quadrature::trapezoid_weights(lin.nodes(), lin.h);
    let mut ms1 = DMatrix::zeros(q, q);
    let mut rs1 = DVector::zeros(q);
    for (i, b) in sens.iter().enumerate() {
        ms1 += b * b.transpose() * weights[i];
        rs1 += b * gf.p_u.column(i) * weights[i];
    }
    let mut residual = &ms1 * pi + &rs1;
    let mut r_stack = rs1;
    if lin.free_tf {
        let c = lin.constraint_time_rate();
        let ms2 = &c * c.transpose();
        let rs2 = &c * lin.terminal_rate();
        let res2 = &ms2 * pi + &rs2;
        residual = stack(&residual, &res2);
        r_stack = stack(&r_stack, &rs2);
    }
    residual.amax() / (T::one() + r_stack.amax())
}

fn stack<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}
