//! Time-varying communication graphs and their doubly stochastic mixing
//! matrices.

mod digraph;
pub mod io;
mod schedule;
mod weights;

use thiserror::Error;

pub use digraph::Digraph;
pub use schedule::{
    fit_geometric_envelope, generate_b_connected_schedule, spectral_norm,
    transition_decay_profile, DecayFit, GraphSchedule, TransitionProduct, WeightRule,
    DECAY_NOISE_FLOOR,
};
pub use weights::{
    metropolis_weights, verify_doubly_stochastic, WeightMatrix, DEFAULT_FLOOR, DEFAULT_TOL,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("a graph needs at least one agent")]
    NoAgents,
    #[error("edge ({from} -> {to}) out of range for {agents} agents")]
    EdgeOutOfRange { from: usize, to: usize, agents: usize },
    #[error("agent count mismatch: expected {expected}, found {found}")]
    AgentMismatch { expected: usize, found: usize },
    #[error("graph is not strongly connected: agent {to} is unreachable from agent {from}")]
    NotStronglyConnected { from: usize, to: usize },
    #[error("window {window} is not strongly connected: agent {to} is unreachable from agent {from}")]
    WindowNotConnected { window: usize, from: usize, to: usize },
    #[error("snapshot was declared symmetric but has a one-way edge")]
    NotSymmetric,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("graph generation failed: {0}")]
    Generation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
