use thiserror::Error;

use crate::network::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge {from} -> {to} references unknown node {missing}")]
    DanglingEdge {
        from: NodeId,
        to: NodeId,
        missing: NodeId,
    },
    #[error("edge {from} -> {to} has non-positive length {length_km} km")]
    NonPositiveLength {
        from: NodeId,
        to: NodeId,
        length_km: f64,
    },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("demand matrix has {got} columns, network has {expected} nodes")]
    DemandShape { expected: usize, got: usize },
    #[error("demand entry at slot {slot}, column {column} is negative or not finite: {value}")]
    InvalidDemand {
        slot: usize,
        column: usize,
        value: f64,
    },
    #[error(
        "insufficient history: forecast at slot {slot} needs {needed} slots, {available} available"
    )]
    InsufficientHistory {
        slot: usize,
        needed: usize,
        available: usize,
    },
    #[error("demand window has {got} slots, horizon requires {expected}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("target capacity {target_kw} kW unreachable with at most {max_chargers} chargers")]
    UnreachableCapacity { target_kw: f64, max_chargers: u32 },
    #[error("mobile charger {0} needs a recall but the plan has no depots")]
    NoDepot(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("queue parameters unstable (rho = {rho}) and no waiting cap given")]
    UnstableQueue { rho: f64 },
    #[error("enumeration of {size} candidate plans exceeds the cap of {cap}")]
    EnumerationCap { size: u128, cap: u128 },
    #[error(
        "value estimate magnitude {value} exceeded the divergence guard {limit} at step {step}"
    )]
    Diverged { value: f64, limit: f64, step: usize },
    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
