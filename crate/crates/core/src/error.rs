use thiserror::Error;

/// Errors raised while building, evolving or diagnosing a problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VemError {
    #[error("evaluator `{evaluator}` returned a non-finite value{}", node_suffix(*.node))]
    Evaluation {
        evaluator: &'static str,
        node: Option<usize>,
    },

    #[error("evaluator `{evaluator}` returned shape {got:?}, expected {expected:?}")]
    Shape {
        evaluator: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error(
        "transition matrix at node {node} is ill-conditioned (condition estimate {condition:e})"
    )]
    TransitionConditioning { node: usize, condition: f64 },

    #[error("multiplier matrix is singular: {0}")]
    Controllability(String),

    #[error("flat state has length {got}, layout requires {expected}")]
    Layout { expected: usize, got: usize },

    #[error(
        "initial trajectory is not feasible: dynamics residual {dyn_res:e}, \
         constraint residual {g_res:e}, tolerance {tol:e}"
    )]
    InfeasibleInit { dyn_res: f64, g_res: f64, tol: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

fn node_suffix(node: Option<usize>) -> String {
    match node {
        Some(i) => format!(" at node {i}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, VemError>;
