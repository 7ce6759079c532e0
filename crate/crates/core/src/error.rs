use thiserror::Error;

use crate::graph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid graph or objective literal.
    #[error("construction error: {0}")]
    Construction(String),

    /// Argument outside an operation's domain (dimension mismatch, negative time, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Some local minimizer set is unbounded.
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("minimizer search did not converge (|grad| = {grad_norm:e} at {iterate:?})")]
    NonConvergence { iterate: Vec<f64>, grad_norm: f64 },

    #[error("non-finite state for agent {agent} at t = {t}")]
    NonFinite { t: f64, agent: usize },

    #[error("schedule rejected: {}", join_violations(.0))]
    Schedule(Vec<Violation>),

    #[error("invalid simulation config: {}", .0.join("; "))]
    Config(Vec<String>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
