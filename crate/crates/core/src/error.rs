use std::path::PathBuf;

use crate::network::{NodeId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no edges")]
    NoEdges,

    #[error("duplicate edge ({0},{1})")]
    DuplicateEdge(NodeId, NodeId),

    #[error("similarity for ({0},{1}) given in both directions")]
    DuplicateSimilarity(NodeId, NodeId),

    #[error("node {node} out of range for network with {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },

    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("product vector is all zero")]
    ZeroVector,

    #[error("product vector has a negative or non-finite component")]
    BadComponent,

    #[error("null index {index} out of range for {dim} features")]
    NullIndexOutOfRange { index: usize, dim: usize },

    #[error("products need at least 2 features, got {0}")]
    TooFewFeatures(usize),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("aggregate vector is zero")]
    ZeroAggregate,

    #[error("unknown product {0}")]
    UnknownProduct(usize),

    #[error("node {node} seeded by both product {first} and product {second}")]
    SeedConflict {
        node: NodeId,
        first: usize,
        second: usize,
    },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("plans disagree on horizon: {0} vs {1}")]
    HorizonMismatch(usize, usize),

    #[error("no fixed point after {0} steps")]
    StepLimit(usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration exceeds cap of {cap} outcomes")]
    EnumerationCap { cap: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
