//! # varevo
//!
//! Optimal control problems with terminal constraints, solved by evolving a
//! feasible trajectory along a virtual "variation time" `tau`.
//!
//! Starting from a trajectory that satisfies the dynamics, the initial state
//! and the terminal constraint, the nodal controls, states and (optionally)
//! the terminal time are moved by rates that keep the terminal constraint
//! satisfied to first order and never increase the cost. The rates are built
//! from state transition matrices of the linearized dynamics and a small
//! linear system for the terminal-constraint multiplier `pi`, so no costate
//! equations are integrated. The semi-discretized evolution is one large
//! initial-value problem in `tau`, integrated with an adaptive
//! Dormand-Prince 5(4) scheme until the optimality residuals vanish.
//!
//! Costates and multipliers of the classical formulation are recovered
//! afterwards from primal quantities ([`diagnostics`]).
//!
//! ```no_run
//! use varevo::prelude::*;
//!
//! let problem = problems::brachistochrone::<f64>();
//! let init = problems::init_straightline_brachistochrone::<f64>(101).unwrap();
//! let gains = Gains::scaled_identity(1, 0.1, 0.05).unwrap();
//! let report = evolve(&problem, &init, &gains, &Config::default()).unwrap();
//! println!("t_f = {}", report.last().tf);
//! ```
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `f64`
//! aliases below cover the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dopri;
pub mod engine;
pub mod error;
pub mod linearization;
pub mod model;
pub mod problems;
pub mod quadrature;
pub mod scalar;
pub mod transition;
pub mod variation;

pub use engine::{evolve, EvolutionConfig, Snapshot, SolveReport, StopReason};
pub use error::{Result, VemError};
pub use linearization::Linearization;
pub use model::{
    evaluate_cost, feasibility_residual, GainConfig, OptimalControlProblem, ProblemModel,
    TerminalTime, TrajectoryGrid,
};
pub use scalar::Real;
pub use transition::{build_transition_set, TransitionSet};
pub use variation::RateBundle;

/// `f64` problem model.
pub type Problem = ProblemModel<f64>;
/// `f64` trajectory grid.
pub type Trajectory = TrajectoryGrid<f64>;
/// `f64` gains.
pub type Gains = GainConfig<f64>;
/// `f64` evolution configuration.
pub type Config = EvolutionConfig<f64>;
/// `f64` solve report.
pub type Report = SolveReport<f64>;

pub mod prelude {
    pub use crate::problems;
    pub use crate::{
        evaluate_cost, evolve, feasibility_residual, Config, EvolutionConfig, GainConfig, Gains,
        OptimalControlProblem, Problem, ProblemModel, Real, Report, StopReason, TerminalTime,
        Trajectory, TrajectoryGrid, VemError,
    };
}
