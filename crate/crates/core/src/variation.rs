//! Control gradient, terminal-constraint multiplier and evolution rates.
//!
//! For a feasible snapshot the control gradient is
//!
//! ```text
//! p_u(t) = L_u + f_u^T phi_x + f_u^T * int_t^tf Phi^T(s, t) w(s) ds
//! w      = L_x + phi_tx + phi_xx^T f + f_x^T phi_x
//! ```
//!
//! and the rates that keep `g(x(t_f), t_f) = 0` to first order while
//! decreasing the cost are
//!
//! ```text
//! du/dtau  = -K (p_u + B(t)^T pi),       B(t) = g_x Phi(t_f, t) f_u(t)
//! dtf/dtau = -k_tf (phi_t + phi_x^T f + L + pi^T (g_x f + g_t)) at t_f
//! M pi = -r
//! ```
//!
//! The state rate follows from the linearized dynamics driven by `du/dtau`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VemError};
use crate::linearization::Linearization;
use crate::model::GainConfig;
use crate::quadrature;
use crate::scalar::Real;
use crate::transition::{lerp, TransitionSet, SUBSTEPS};

/// Costate-free control gradient at every node.
#[derive(Debug, Clone)]
pub struct GradientField<T: Real> {
    /// m x N.
    pub p_u: DMatrix<T>,
    /// n x N, inner integrand at each node.
    pub w: DMatrix<T>,
    /// n x N, `tail_i = int_{t_i}^{t_f} Phi^T(s, t_i) w(s) ds`.
    pub tail: DMatrix<T>,
}

pub fn compute_gradient_field<T: Real>(
    lin: &Linearization<T>,
    ts: &TransitionSet<T>,
) -> GradientField<T> {
    let nodes = lin.nodes();
    let (n, m) = (lin.state_dim(), lin.control_dim());
    // int_{t_i}^{t_f} Phi^T(s, t_i) w(s) ds = Psi_i^-T int_{t_i}^{t_f} Psi_s^T w(s) ds
    let weighted: Vec<DVector<T>> = (0..nodes)
        .map(|k| ts.fundamental(k).tr_mul(&lin.w[k]))
        .collect();
    let sigma = quadrature::cumulative_backward(&weighted, lin.h);

    let mut p_u = DMatrix::zeros(m, nodes);
    let mut w = DMatrix::zeros(n, nodes);
    let mut tail = DMatrix::zeros(n, nodes);
    for i in 0..nodes {
        let tail_i = if i + 1 == nodes {
            DVector::zeros(n)
        } else {
            ts.fundamental_inv(i).tr_mul(&sigma[i])
        };
        let p = &lin.lu[i] + lin.fu[i].tr_mul(&(&lin.phi_x[i] + &tail_i));
        p_u.set_column(i, &p);
        w.set_column(i, &lin.w[i]);
        tail.set_column(i, &tail_i);
    }
    GradientField { p_u, w, tail }
}

/// `B_i = g_x Phi(t_f, t_i) f_u(t_i)` for every node, q x m each.
pub fn constraint_sensitivities<T: Real>(
    lin: &Linearization<T>,
    ts: &TransitionSet<T>,
) -> Vec<DMatrix<T>> {
    (0..lin.nodes())
        .map(|i| &lin.g_x * ts.to_final(i) * &lin.fu[i])
        .collect()
}

/// The linear system `M pi = -r` fixing the terminal-constraint multiplier.
#[derive(Debug, Clone)]
pub struct MultiplierSystem<T: Real> {
    pub m: DMatrix<T>,
    pub r: DVector<T>,
    pub pi: DVector<T>,
    /// Per-node constraint sensitivities `B_i`, reused by the rates.
    pub sensitivities: Vec<DMatrix<T>>,
}

impl<T: Real> MultiplierSystem<T> {
    /// Empty system for problems without terminal constraints.
    pub fn empty(lin: &Linearization<T>) -> Self {
        MultiplierSystem {
            m: DMatrix::zeros(0, 0),
            r: DVector::zeros(0),
            pi: DVector::zeros(0),
            sensitivities: vec![DMatrix::zeros(0, lin.control_dim()); lin.nodes()],
        }
    }
}

/// Assembles `M`, `r` by trapezoidal quadrature and solves for `pi`.
///
/// With a fixed terminal time the `k_tf` terms are dropped. Without terminal
/// constraints the empty system is returned.
pub fn assemble_multiplier_system<T: Real>(
    lin: &Linearization<T>,
    ts: &TransitionSet<T>,
    gf: &GradientField<T>,
    gains: &GainConfig<T>,
) -> Result<MultiplierSystem<T>> {
    let q = lin.constraint_dim();
    if q == 0 {
        return Ok(MultiplierSystem::empty(lin));
    }
    for (row, g_row) in lin.g_x.row_iter().enumerate() {
        if g_row.iter().all(|v| *v == T::zero()) {
            return Err(VemError::Controllability(format!(
                "row {row} of the terminal constraint Jacobian is identically zero"
            )));
        }
    }
    let k = gains.k();
    let sens = constraint_sensitivities(lin, ts);
    let weights = quadrature::trapezoid_weights(lin.nodes(), lin.h);

    let mut m = DMatrix::zeros(q, q);
    let mut r = DVector::zeros(q);
    for (i, b) in sens.iter().enumerate() {
        let bk = b * k;
        m += &bk * b.transpose() * weights[i];
        r += &bk * gf.p_u.column(i) * weights[i];
    }
    if lin.free_tf {
        let c = lin.constraint_time_rate();
        m += &c * c.transpose() * gains.k_tf();
        r += &c * (gains.k_tf() * lin.terminal_rate());
    }
    let m = (&m + m.transpose()) * T::lit(0.5);
    let pi = solve_symmetric(&m, &(-&r))?;
    Ok(MultiplierSystem {
        m,
        r,
        pi,
        sensitivities: sens,
    })
}

/// LU solve with a conditioning guard; singular systems are reported, never
/// least-squares solved.
fn solve_symmetric<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    let lu = m.clone().lu();
    let sol = lu
        .solve(rhs)
        .ok_or_else(|| VemError::Controllability("LU factorization hit a zero pivot".into()))?;
    let inv = lu
        .try_inverse()
        .ok_or_else(|| VemError::Controllability("LU factorization hit a zero pivot".into()))?;
    let cond = m.norm() * inv.norm();
    let limit = T::one() / (T::default_epsilon() * T::lit(1e3));
    if !cond.finite() || cond > limit {
        return Err(VemError::Controllability(format!(
            "condition estimate {:e} exceeds {:e}",
            cond.as_f64(),
            limit.as_f64()
        )));
    }
    Ok(sol)
}

/// `p_u + B^T pi` at every node (m x N): the quantity driven to zero.
pub fn control_residual<T: Real>(gf: &GradientField<T>, ms: &MultiplierSystem<T>) -> DMatrix<T> {
    let mut e = gf.p_u.clone();
    if !ms.pi.is_empty() {
        for (i, b) in ms.sensitivities.iter().enumerate() {
            let corr = b.tr_mul(&ms.pi);
            let mut col = e.column_mut(i);
            col += corr;
        }
    }
    e
}

/// `phi_t + phi_x^T f + L + pi^T (g_x f + g_t)` at `t_f`.
pub fn terminal_time_residual<T: Real>(lin: &Linearization<T>, ms: &MultiplierSystem<T>) -> T {
    let base = lin.terminal_rate();
    if ms.pi.is_empty() {
        base
    } else {
        base + ms.pi.dot(&lin.constraint_time_rate())
    }
}

/// Rates of change of all nodal quantities and of `t_f`.
#[derive(Debug, Clone)]
pub struct EvolutionRates<T: Real> {
    /// m x N.
    pub du: DMatrix<T>,
    /// n x N; column 0 is always zero.
    pub dx: DMatrix<T>,
    pub dtf: T,
    pub pi: DVector<T>,
}

/// Control and terminal-time rates. Zero `dtf` in fixed-time mode.
pub fn control_and_tf_rates<T: Real>(
    lin: &Linearization<T>,
    gf: &GradientField<T>,
    ms: &MultiplierSystem<T>,
    gains: &GainConfig<T>,
) -> (DMatrix<T>, T) {
    let du = -(gains.k() * control_residual(gf, ms));
    let dtf = if lin.free_tf {
        -gains.k_tf() * terminal_time_residual(lin, ms)
    } else {
        T::zero()
    };
    (du, dtf)
}

/// Integrates `d(dx)/dt = f_x dx + f_u du`, `dx(t0) = 0` node to node with RK4,
/// coefficients linearly interpolated between nodes.
pub fn state_rate<T: Real>(lin: &Linearization<T>, du: &DMatrix<T>) -> DMatrix<T> {
    let nodes = lin.nodes();
    let n = lin.state_dim();
    let mut dx = DMatrix::zeros(n, nodes);
    let dt = lin.h / T::count(SUBSTEPS);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let dth = T::one() / T::count(SUBSTEPS);
    let forcing: Vec<DVector<T>> = (0..nodes).map(|i| &lin.fu[i] * du.column(i)).collect();

    let mut y = DVector::zeros(n);
    for i in 0..nodes - 1 {
        let (a0, a1) = (&lin.fx[i], &lin.fx[i + 1]);
        let (b0, b1) = (&forcing[i], &forcing[i + 1]);
        let src = |th: T| b0 * (T::one() - th) + b1 * th;
        for s in 0..SUBSTEPS {
            let th = T::count(s) * dth;
            let a_start = lerp(a0, a1, th);
            let a_mid = lerp(a0, a1, th + half * dth);
            let a_end = lerp(a0, a1, th + dth);
            let (s_start, s_mid, s_end) = (src(th), src(th + half * dth), src(th + dth));
            let k1 = &a_start * &y + &s_start;
            let k2 = &a_mid * (&y + &k1 * (half * dt)) + &s_mid;
            let k3 = &a_mid * (&y + &k2 * (half * dt)) + &s_mid;
            let k4 = &a_end * (&y + &k3 * dt) + &s_end;
            y += (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt * sixth);
        }
        dx.set_column(i + 1, &y);
    }
    dx
}

/// Left side of the linearized terminal constraint for given rates:
/// `sum_i w_i B_i du_i + (g_x f + g_t) dtf`, length q.
pub fn tangency_residual<T: Real>(
    lin: &Linearization<T>,
    ms: &MultiplierSystem<T>,
    du: &DMatrix<T>,
    dtf: T,
) -> DVector<T> {
    let q = lin.constraint_dim();
    let mut acc = DVector::zeros(q);
    if q == 0 {
        return acc;
    }
    let weights = quadrature::trapezoid_weights(lin.nodes(), lin.h);
    for (i, b) in ms.sensitivities.iter().enumerate() {
        acc += b * du.column(i) * weights[i];
    }
    acc + lin.constraint_time_rate() * dtf
}

/// The cost derivative along the rates, evaluated two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDerivative<T> {
    /// `(phi_t + phi_x^T f + L)|tf * dtf + int p_u^T du dt`.
    pub directional: T,
    /// `-k_tf (terminal residual)^2 - int e^T K e dt`, `e = p_u + B^T pi`.
    pub negative_form: T,
}

pub fn cost_derivative<T: Real>(
    lin: &Linearization<T>,
    gf: &GradientField<T>,
    ms: &MultiplierSystem<T>,
    gains: &GainConfig<T>,
    du: &DMatrix<T>,
    dtf: T,
) -> CostDerivative<T> {
    let weights = quadrature::trapezoid_weights(lin.nodes(), lin.h);
    let e = control_residual(gf, ms);
    let mut directional = lin.terminal_rate() * dtf;
    let mut negative_form = T::zero();
    for i in 0..lin.nodes() {
        directional += gf.p_u.column(i).dot(&du.column(i)) * weights[i];
        let ei = e.column(i);
        negative_form -= ei.dot(&(gains.k() * ei)) * weights[i];
    }
    if lin.free_tf {
        let res = terminal_time_residual(lin, ms);
        negative_form -= gains.k_tf() * res * res;
    }
    CostDerivative {
        directional,
        negative_form,
    }
}

/// Every rate for one snapshot, plus the intermediate objects.
#[derive(Debug, Clone)]
pub struct RateBundle<T: Real> {
    pub lin: Linearization<T>,
    pub ts: TransitionSet<T>,
    pub gf: GradientField<T>,
    pub ms: MultiplierSystem<T>,
    pub rates: EvolutionRates<T>,
}

impl<T: Real> RateBundle<T> {
    pub fn compute(
        problem: &crate::model::ProblemModel<T>,
        traj: &crate::model::TrajectoryGrid<T>,
        gains: &GainConfig<T>,
    ) -> Result<Self> {
        let lin = Linearization::evaluate(problem, traj)?;
        let ts = TransitionSet::build(&lin)?;
        let gf = compute_gradient_field(&lin, &ts);
        let ms = assemble_multiplier_system(&lin, &ts, &gf, gains)?;
        let (du, dtf) = control_and_tf_rates(&lin, &gf, &ms, gains);
        let dx = state_rate(&lin, &du);
        let pi = ms.pi.clone();
        Ok(RateBundle {
            lin,
            ts,
            gf,
            ms,
            rates: EvolutionRates { du, dx, dtf, pi },
        })
    }

    /// `max_i |p_u + B_i^T pi|_inf` and the absolute terminal-time residual
    /// (zero with fixed terminal time).
    pub fn optimality_residuals(&self) -> (T, T) {
        let res_u = control_residual(&self.gf, &self.ms).amax();
        let res_tf = if self.lin.free_tf {
            terminal_time_residual(&self.lin, &self.ms).abs()
        } else {
            T::zero()
        };
        (res_u, res_tf)
    }
}
