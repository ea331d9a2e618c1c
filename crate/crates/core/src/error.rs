use crate::bn::BnError;
use crate::lang::QueryError;
use crate::model::ModelError;

/// Failure of either inference backend.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Bn(#[from] BnError),
    #[error("dependency cycle through `{0}`")]
    CycleDetected(String),
    #[error("local network of `{0}` has no topological order")]
    CyclicLocalOrder(String),
    #[error("recursion depth {depth} exceeded at `{at}`")]
    RecursionDepthExceeded { depth: usize, at: String },
    #[error("naive counting CPT over {n} parents exceeds the cap {cap}")]
    NaiveCapExceeded { n: usize, cap: usize },
    #[error("multiplexer parent ranges differ from the output range: {0}")]
    RangeMismatch(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("evidence contradicts itself at `{0}`")]
    ContradictoryEvidence(String),
}

impl InferenceError {
    /// Stable kebab-case code for service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            InferenceError::Model(_) => "model-error",
            InferenceError::Query(QueryError::UnknownInstance(_)) => "unknown-instance",
            InferenceError::Query(QueryError::NonSimpleChain(_)) => "non-simple-chain",
            InferenceError::Query(QueryError::BadValue { .. }) => "bad-value",
            InferenceError::Query(QueryError::Syntax(_)) => "syntax-error",
            InferenceError::Bn(BnError::ImpossibleEvidence) => "impossible-evidence",
            InferenceError::Bn(BnError::FactorTooLarge { .. }) => "factor-too-large",
            InferenceError::Bn(BnError::Deadline) => "deadline",
            InferenceError::Bn(_) => "network-error",
            InferenceError::CycleDetected(_) => "cycle-detected",
            InferenceError::CyclicLocalOrder(_) => "cyclic-local-order",
            InferenceError::RecursionDepthExceeded { .. } => "recursion-depth-exceeded",
            InferenceError::NaiveCapExceeded { .. } => "naive-cap-exceeded",
            InferenceError::RangeMismatch(_) => "range-mismatch",
            InferenceError::Unsupported(_) => "unsupported-structure",
            InferenceError::ContradictoryEvidence(_) => "contradictory-evidence",
        }
    }
}
