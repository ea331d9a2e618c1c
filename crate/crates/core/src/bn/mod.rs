//! Exact inference over discrete Bayesian networks: factor algebra,
//! variable elimination under a min-fill order, conditional tables for free
//! input nodes, and a brute-force enumeration oracle.

mod dump;
mod eliminate;
mod enumerate;
mod factor;
mod network;
mod order;

pub use dump::dump_network;
pub use eliminate::{
    conditional_query, query, query_repeated, query_with, VeOptions, VeStats, DEFAULT_MAX_CELLS, IMPOSSIBLE_EVIDENCE,
};
pub(crate) use eliminate::{dedup as dedup_ids, expand_repeats};
pub use enumerate::{enumerate_marginal, joint_enumerate, DEFAULT_STATE_CAP};
pub use factor::Factor;
pub use network::{DiscreteNetwork, Node};
pub use order::{triangulation_stats, CliqueStats};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BnError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("CPT is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("value index {value} out of range for `{node}`")]
    BadValue { node: String, value: usize },
    #[error("evidence has probability zero")]
    ImpossibleEvidence,
    #[error("no query targets")]
    EmptyTargets,
    #[error("input node `{0}` has a CPD or parents")]
    InputHasCpd(String),
    #[error("node `{0}` has no CPD and is not clamped")]
    UnboundInput(String),
    #[error("joint state space {states} exceeds the cap {cap}")]
    StateSpaceTooLarge { states: u128, cap: u128 },
    #[error("intermediate factor of {cells} cells exceeds the cap {cap}")]
    FactorTooLarge { cells: usize, cap: usize },
    #[error("deadline exceeded")]
    Deadline,
}
