//! Semi-discrete evolution: the nodal states, controls and (when free) the
//! terminal time form one flat IVP in the variation time `tau`, integrated
//! with Dormand-Prince 5(4) until the optimality residuals vanish.

use std::cell::RefCell;
use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};

use crate::dopri::{Advance, DormandPrince, IntegrationError, IvpState};
use crate::error::{Result, VemError};
use crate::model::{
    evaluate_cost, feasibility_residual, GainConfig, ProblemModel, TrajectoryGrid, DEFAULT_TF_FLOOR,
};
use crate::scalar::Real;
use crate::variation::RateBundle;

/// Default ceiling on the initial dynamics / constraint residual.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 0.1;

/// Evolution aborts when feasibility degrades past this multiple of the
/// configured tolerance.
pub const FEASIBILITY_ABORT_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig<T> {
    pub tau_max: T,
    pub rel_tol: T,
    pub abs_tol: T,
    /// Stop once both optimality residuals fall below this.
    pub residual_tol: T,
    /// Spacing in `tau` of the recorded snapshots.
    pub snapshot_every: T,
    pub feasibility_tol: T,
    /// Carry nodal values along the stretching grid when `t_f` evolves
    /// (adds `s_i * dx/dt * dt_f/dtau` to each nodal rate).
    pub stretch_correction: bool,
}

impl<T: Real> Default for EvolutionConfig<T> {
    fn default() -> Self {
        EvolutionConfig {
            tau_max: T::lit(300.0),
            rel_tol: T::lit(1e-3),
            abs_tol: T::lit(1e-6),
            residual_tol: T::lit(1e-6),
            snapshot_every: T::lit(1.0),
            feasibility_tol: T::lit(DEFAULT_FEASIBILITY_TOL),
            stretch_correction: true,
        }
    }
}

impl<T: Real> EvolutionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("residual_tol", self.residual_tol),
            ("snapshot_every", self.snapshot_every),
            ("feasibility_tol", self.feasibility_tol),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.finite() {
                return Err(VemError::Config(format!(
                    "{name} must be positive, got {v:?}"
                )));
            }
        }
        if !(self.tau_max >= T::zero()) || !self.tau_max.finite() {
            return Err(VemError::Config(format!(
                "tau_max must be non-negative, got {:?}",
                self.tau_max
            )));
        }
        Ok(())
    }
}

/// Shape of the flat IVP state: `[x row-major | u row-major | t_f if free]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub m: usize,
    pub nodes: usize,
    pub free_tf: bool,
}

impl StateLayout {
    pub fn for_problem<T: Real>(problem: &ProblemModel<T>, nodes: usize) -> Self {
        StateLayout {
            n: problem.state_dim(),
            m: problem.control_dim(),
            nodes,
            free_tf: problem.terminal_time().is_free(),
        }
    }

    pub fn len(&self) -> usize {
        (self.n + self.m) * self.nodes + usize::from(self.free_tf)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn pack_state<T: Real>(traj: &TrajectoryGrid<T>, layout: &StateLayout) -> Result<DVector<T>> {
    if traj.state_dim() != layout.n
        || traj.control_dim() != layout.m
        || traj.nodes() != layout.nodes
    {
        return Err(VemError::Layout {
            expected: layout.len(),
            got: (traj.state_dim() + traj.control_dim()) * traj.nodes(),
        });
    }
    Ok(pack_parts(
        &traj.x,
        &traj.u,
        layout.free_tf.then_some(traj.tf),
    ))
}

fn pack_parts<T: Real>(x: &DMatrix<T>, u: &DMatrix<T>, tf: Option<T>) -> DVector<T> {
    let mut out = Vec::with_capacity(x.len() + u.len() + 1);
    for row in x.row_iter() {
        out.extend(row.iter().copied());
    }
    for row in u.row_iter() {
        out.extend(row.iter().copied());
    }
    out.extend(tf);
    DVector::from_vec(out)
}

/// Inverse of [`pack_state`]. In fixed-time mode `t_f` comes from the caller.
pub fn unpack_state<T: Real>(
    flat: &DVector<T>,
    layout: &StateLayout,
    t0: T,
    fixed_tf: Option<T>,
) -> Result<TrajectoryGrid<T>> {
    if flat.len() != layout.len() {
        return Err(VemError::Layout {
            expected: layout.len(),
            got: flat.len(),
        });
    }
    let (n, m, nodes) = (layout.n, layout.m, layout.nodes);
    let x = DMatrix::from_row_slice(n, nodes, &flat.as_slice()[..n * nodes]);
    let u = DMatrix::from_row_slice(m, nodes, &flat.as_slice()[n * nodes..(n + m) * nodes]);
    let tf = if layout.free_tf {
        flat[flat.len() - 1]
    } else {
        fixed_tf.ok_or_else(|| VemError::Config("fixed terminal time missing".into()))?
    };
    TrajectoryGrid::new(t0, tf, x, u)
}

/// Quantities computed alongside one right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct RhsInfo<T: Real> {
    pub res_u: T,
    pub res_tf: T,
    pub pi: DVector<T>,
}

fn time_derivative<T: Real>(values: &DMatrix<T>, h: T) -> DMatrix<T> {
    // second-order differences, one-sided at the ends
    let nodes = values.ncols();
    let mut d = DMatrix::zeros(values.nrows(), nodes);
    let two_h = h * T::lit(2.0);
    for i in 1..nodes - 1 {
        d.set_column(i, &((values.column(i + 1) - values.column(i - 1)) / two_h));
    }
    let (a, b, c) = (T::lit(-3.0), T::lit(4.0), T::lit(-1.0));
    d.set_column(
        0,
        &((values.column(0) * a + values.column(1) * b + values.column(2) * c) / two_h),
    );
    let k = nodes - 1;
    d.set_column(
        k,
        &((values.column(k) * (-a) + values.column(k - 1) * (-b) + values.column(k - 2) * (-c))
            / two_h),
    );
    d
}

/// Right side of the semi-discrete evolution equations for one flat state.
pub fn epde_rhs<T: Real>(
    problem: &ProblemModel<T>,
    flat: &DVector<T>,
    layout: &StateLayout,
    gains: &GainConfig<T>,
    stretch_correction: bool,
) -> Result<(DVector<T>, RhsInfo<T>)> {
    let fixed_tf = match problem.terminal_time() {
        crate::model::TerminalTime::Fixed(tf) => Some(tf),
        crate::model::TerminalTime::Free => None,
    };
    let traj = unpack_state(flat, layout, problem.initial_time(), fixed_tf)?;
    let bundle = RateBundle::compute(problem, &traj, gains)?;
    let (res_u, res_tf) = bundle.optimality_residuals();
    let rates = bundle.rates;
    let (mut dx, mut du) = (rates.dx, rates.du);
    if layout.free_tf && stretch_correction && rates.dtf != T::zero() {
        let last = T::count(layout.nodes - 1);
        let u_dot = time_derivative(&traj.u, traj.step());
        for i in 1..layout.nodes {
            let s = T::count(i) / last * rates.dtf;
            let mut col = dx.column_mut(i);
            col += &bundle.lin.f[i] * s;
            let mut col = du.column_mut(i);
            col += u_dot.column(i) * s;
        }
    }
    let flat_rate = pack_parts(&dx, &du, layout.free_tf.then_some(rates.dtf));
    Ok((
        flat_rate,
        RhsInfo {
            res_u,
            res_tf,
            pi: rates.pi,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ResidualMet,
    TauMaxReached,
    Diverged,
    FeasibilityLost,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ResidualMet => "ResidualMet",
            StopReason::TauMaxReached => "TauMaxReached",
            StopReason::Diverged => "Diverged",
            StopReason::FeasibilityLost => "FeasibilityLost",
        }
    }
}

/// One recorded point of the evolution history.
#[derive(Debug, Clone)]
pub struct Snapshot<T: Real> {
    pub tau: T,
    pub cost: T,
    pub res_u: T,
    pub res_tf: T,
    pub pi: DVector<T>,
    pub tf: T,
    /// `|g(x_N, t_f)|_inf`.
    pub g_drift: T,
    /// Central-difference dynamics residual.
    pub dyn_res: T,
    pub trajectory: TrajectoryGrid<T>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub snapshots: Vec<Snapshot<T>>,
    pub stop_reason: StopReason,
    /// Error that ended the run when `stop_reason` is `Diverged`.
    pub failure: Option<VemError>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

impl<T: Real> SolveReport<T> {
    pub fn last(&self) -> &Snapshot<T> {
        self.snapshots
            .last()
            .expect("report holds the initial snapshot")
    }

    pub fn final_trajectory(&self) -> &TrajectoryGrid<T> {
        &self.last().trajectory
    }
}

fn snapshot<T: Real>(
    problem: &ProblemModel<T>,
    traj: TrajectoryGrid<T>,
    gains: &GainConfig<T>,
    tau: T,
) -> Result<Snapshot<T>> {
    let bundle = RateBundle::compute(problem, &traj, gains)?;
    let (res_u, res_tf) = bundle.optimality_residuals();
    let feas = feasibility_residual(problem, &traj)?;
    Ok(Snapshot {
        tau,
        cost: evaluate_cost(problem, &traj)?,
        res_u,
        res_tf,
        pi: bundle.ms.pi,
        tf: traj.tf,
        g_drift: feas.constraint,
        dyn_res: feas.dynamics,
        trajectory: traj,
    })
}

/// Evolves a feasible initial trajectory towards the optimum.
///
/// Errors are returned for invalid input (configuration, infeasible start,
/// failure at the initial point). Failures during the evolution end the run
/// with [`StopReason::Diverged`] and are kept in [`SolveReport::failure`].
pub fn evolve<T: Real>(
    problem: &ProblemModel<T>,
    init: &TrajectoryGrid<T>,
    gains: &GainConfig<T>,
    cfg: &EvolutionConfig<T>,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    init.validate(problem)?;
    if gains.k().nrows() != problem.control_dim() {
        return Err(VemError::Config(format!(
            "K is {}x{}, control dimension is {}",
            gains.k().nrows(),
            gains.k().ncols(),
            problem.control_dim()
        )));
    }
    if let crate::model::TerminalTime::Fixed(tf) = problem.terminal_time() {
        if init.tf != tf {
            return Err(VemError::Config(format!(
                "initial trajectory ends at {:?}, fixed terminal time is {:?}",
                init.tf, tf
            )));
        }
    }
    let feas = feasibility_residual(problem, init)?;
    if feas.max() > cfg.feasibility_tol {
        return Err(VemError::InfeasibleInit {
            dyn_res: feas.dynamics.as_f64(),
            g_res: feas.constraint.as_f64(),
            tol: cfg.feasibility_tol.as_f64(),
        });
    }

    let layout = StateLayout::for_problem(problem, init.nodes());
    let fixed_tf = (!layout.free_tf).then_some(init.tf);
    let t0 = problem.initial_time();
    let tf_floor = t0 + T::lit(DEFAULT_TF_FLOOR);

    let first = snapshot(problem, init.clone(), gains, T::zero())?;
    let mut report = SolveReport {
        stop_reason: StopReason::TauMaxReached,
        failure: None,
        steps_accepted: 0,
        steps_rejected: 0,
        rhs_evaluations: 0,
        snapshots: vec![first],
    };
    if report.snapshots[0].res_u < cfg.residual_tol && report.snapshots[0].res_tf < cfg.residual_tol
    {
        report.stop_reason = StopReason::ResidualMet;
        return Ok(report);
    }
    if cfg.tau_max == T::zero() {
        return Ok(report);
    }

    let last_info: RefCell<Option<RhsInfo<T>>> = RefCell::new(None);
    let mut rhs = |_tau: T, y: &DVector<T>| -> Result<DVector<T>> {
        if layout.free_tf && !(y[y.len() - 1] > tf_floor) {
            return Err(VemError::Config(format!(
                "terminal time collapsed to {:?}",
                y[y.len() - 1]
            )));
        }
        let (rate, info) = epde_rhs(problem, y, &layout, gains, cfg.stretch_correction)?;
        *last_info.borrow_mut() = Some(info);
        Ok(rate)
    };

    let y0 = pack_state(init, &layout)?;
    let dy0 = rhs(T::zero(), &y0)?;
    let mut state = IvpState {
        tau: T::zero(),
        y: y0,
        dy: dy0,
    };
    let mut dp = DormandPrince::new(cfg.rel_tol, cfg.abs_tol);
    let abort_at = cfg.feasibility_tol * T::lit(FEASIBILITY_ABORT_FACTOR);
    let mut k = 1usize;
    loop {
        let target = (cfg.snapshot_every * T::count(k)).min(cfg.tau_max);
        let outcome = dp.advance(&mut rhs, &mut state, target, |_| {
            // the last evaluation of an accepted step is at the new point
            match last_info.borrow().as_ref() {
                Some(info) if info.res_u < cfg.residual_tol && info.res_tf < cfg.residual_tol => {
                    ControlFlow::Break(())
                }
                _ => ControlFlow::Continue(()),
            }
        });
        report.steps_accepted = dp.accepted;
        report.steps_rejected = dp.rejected;
        report.rhs_evaluations = dp.evaluations;
        let advance = match outcome {
            Ok(a) => a,
            Err(e) => {
                let err = match e {
                    IntegrationError::Rhs(err) => err,
                    IntegrationError::StepSizeUnderflow { tau } => {
                        VemError::Config(format!("step size underflow at tau = {tau}"))
                    }
                    IntegrationError::NonFinite { tau } => {
                        VemError::Config(format!("non-finite state at tau = {tau}"))
                    }
                    IntegrationError::TooManySteps { tau } => {
                        VemError::Config(format!("step limit reached at tau = {tau}"))
                    }
                };
                log::warn!("evolution diverged: {err}");
                report.stop_reason = StopReason::Diverged;
                report.failure = Some(err);
                return Ok(report);
            }
        };
        let traj = unpack_state(&state.y, &layout, t0, fixed_tf)?;
        let snap = match snapshot(problem, traj, gains, state.tau) {
            Ok(s) => s,
            Err(err) => {
                report.stop_reason = StopReason::Diverged;
                report.failure = Some(err);
                return Ok(report);
            }
        };
        let lost = snap.g_drift > abort_at || snap.dyn_res > abort_at;
        let met = snap.res_u < cfg.residual_tol && snap.res_tf < cfg.residual_tol;
        log::debug!(
            "tau = {:.3}  J = {:.6}  res_u = {:.3e}  res_tf = {:.3e}  tf = {:.5}",
            snap.tau.as_f64(),
            snap.cost.as_f64(),
            snap.res_u.as_f64(),
            snap.res_tf.as_f64(),
            snap.tf.as_f64()
        );
        report.snapshots.push(snap);
        if lost {
            report.stop_reason = StopReason::FeasibilityLost;
            return Ok(report);
        }
        if advance == Advance::Interrupted || met {
            report.stop_reason = StopReason::ResidualMet;
            return Ok(report);
        }
        if state.tau >= cfg.tau_max {
            return Ok(report);
        }
        k += 1;
    }
}
