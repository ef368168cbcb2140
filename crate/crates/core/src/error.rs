use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signed-adjacency encoding at ({i},{j}): pair ({a},{b})")]
    InvalidEncoding { i: usize, j: usize, a: i32, b: i32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("edge not found: {0}")]
    EdgeNotFound(String),
    #[error("edge is not directed: {0}")]
    EdgeNotDirected(String),
    #[error("graph is not a fully directed acyclic graph: {0}")]
    GraphNotDag(String),
    #[error("vertex sets overlap")]
    VertexOverlap,
    #[error("graph has {nodes} nodes; exhaustive routines are capped at {cap}")]
    GraphTooLarge { nodes: usize, cap: usize },
    #[error("invalid adjustment set: {0}")]
    InvalidZ(String),
    #[error("candidate set is not a valid adjustment set")]
    InvalidCandidate,
    #[error("no valid adjustment set with at most {max_size} covariates")]
    NoValidAdjustmentSet { max_size: usize },
    #[error("insufficient samples: have {n}, need more than {needed}")]
    InsufficientSamples { n: usize, needed: usize },
    #[error("singular covariance among conditioning columns")]
    SingularCovariance,
    #[error("column `{0}` is not continuous")]
    NonContinuousData(String),
    #[error("unknown plugin `{0}`")]
    UnknownPlugin(String),
    #[error("no orientation provider answered ({0})")]
    ProviderUnavailable(String),
    #[error("conflicting beliefs on edge {0}")]
    ConflictingBeliefs(String),
    #[error("orienting {0} would create a directed cycle")]
    WouldCreateCycle(String),
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("degenerate treatment: {0}")]
    DegenerateTreatment(String),
    #[error("all propensities fall outside the trim bounds")]
    PropensityDegenerate,
    #[error("unknown column(s): {}", .0.join(", "))]
    UnknownColumn(Vec<String>),
    #[error("treatment column `{0}` is not binary 0/1")]
    TreatmentNotBinary(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("unknown step {0}")]
    UnknownStep(u64),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("out of order: {0}")]
    OutOfOrder(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("estimator failed on seed {seed}: {source}")]
    EstimatorRun {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("payload too large")]
    PayloadTooLarge,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Closed set of machine-readable error codes shared by the HTTP API and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidEncoding,
    DimensionMismatch,
    DuplicateName,
    UnknownVertex,
    EdgeNotFound,
    EdgeNotDirected,
    GraphNotDAG,
    VertexOverlap,
    GraphTooLarge,
    InvalidZ,
    InvalidCandidate,
    NoValidAdjustmentSet,
    InsufficientSamples,
    SingularCovariance,
    NonContinuousData,
    UnknownPlugin,
    ProviderUnavailable,
    ConflictingBeliefs,
    WouldCreateCycle,
    SingularDesign,
    DegenerateTreatment,
    PropensityDegenerate,
    UnknownColumn,
    TreatmentNotBinary,
    ParseError,
    SessionClosed,
    UnknownStep,
    UnknownSession,
    OutOfOrder,
    InvalidInput,
    PayloadTooLarge,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub const ALL: &'static [ErrorCode] = &[
        ErrorCode::InvalidEncoding,
        ErrorCode::DimensionMismatch,
        ErrorCode::DuplicateName,
        ErrorCode::UnknownVertex,
        ErrorCode::EdgeNotFound,
        ErrorCode::EdgeNotDirected,
        ErrorCode::GraphNotDAG,
        ErrorCode::VertexOverlap,
        ErrorCode::GraphTooLarge,
        ErrorCode::InvalidZ,
        ErrorCode::InvalidCandidate,
        ErrorCode::NoValidAdjustmentSet,
        ErrorCode::InsufficientSamples,
        ErrorCode::SingularCovariance,
        ErrorCode::NonContinuousData,
        ErrorCode::UnknownPlugin,
        ErrorCode::ProviderUnavailable,
        ErrorCode::ConflictingBeliefs,
        ErrorCode::WouldCreateCycle,
        ErrorCode::SingularDesign,
        ErrorCode::DegenerateTreatment,
        ErrorCode::PropensityDegenerate,
        ErrorCode::UnknownColumn,
        ErrorCode::TreatmentNotBinary,
        ErrorCode::ParseError,
        ErrorCode::SessionClosed,
        ErrorCode::UnknownStep,
        ErrorCode::UnknownSession,
        ErrorCode::OutOfOrder,
        ErrorCode::InvalidInput,
        ErrorCode::PayloadTooLarge,
        ErrorCode::NotFound,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::InvalidEncoding => "InvalidEncoding",
            ErrorCode::DimensionMismatch => "DimensionMismatch",
            ErrorCode::DuplicateName => "DuplicateName",
            ErrorCode::UnknownVertex => "UnknownVertex",
            ErrorCode::EdgeNotFound => "EdgeNotFound",
            ErrorCode::EdgeNotDirected => "EdgeNotDirected",
            ErrorCode::GraphNotDAG => "GraphNotDAG",
            ErrorCode::VertexOverlap => "VertexOverlap",
            ErrorCode::GraphTooLarge => "GraphTooLarge",
            ErrorCode::InvalidZ => "InvalidZ",
            ErrorCode::InvalidCandidate => "InvalidCandidate",
            ErrorCode::NoValidAdjustmentSet => "NoValidAdjustmentSet",
            ErrorCode::InsufficientSamples => "InsufficientSamples",
            ErrorCode::SingularCovariance => "SingularCovariance",
            ErrorCode::NonContinuousData => "NonContinuousData",
            ErrorCode::UnknownPlugin => "UnknownPlugin",
            ErrorCode::ProviderUnavailable => "ProviderUnavailable",
            ErrorCode::ConflictingBeliefs => "ConflictingBeliefs",
            ErrorCode::WouldCreateCycle => "WouldCreateCycle",
            ErrorCode::SingularDesign => "SingularDesign",
            ErrorCode::DegenerateTreatment => "DegenerateTreatment",
            ErrorCode::PropensityDegenerate => "PropensityDegenerate",
            ErrorCode::UnknownColumn => "UnknownColumn",
            ErrorCode::TreatmentNotBinary => "TreatmentNotBinary",
            ErrorCode::ParseError => "ParseError",
            ErrorCode::SessionClosed => "SessionClosed",
            ErrorCode::UnknownStep => "UnknownStep",
            ErrorCode::UnknownSession => "UnknownSession",
            ErrorCode::OutOfOrder => "OutOfOrder",
            ErrorCode::InvalidInput => "InvalidInput",
            ErrorCode::PayloadTooLarge => "PayloadTooLarge",
            ErrorCode::NotFound => "NotFound",
            ErrorCode::Internal => "Internal",
        }
    }

    /// HTTP status used by the service for this code.
    pub fn http_status(self) -> u16 {
        use ErrorCode::*;
        match self {
            UnknownSession | UnknownStep | EdgeNotFound | NotFound => 404,
            OutOfOrder | SessionClosed => 409,
            PayloadTooLarge => 413,
            ProviderUnavailable => 502,
            Internal => 500,
            _ => 422,
        }
    }

    /// Process exit code used by the CLI: 1 for user errors, 2 for internal ones.
    pub fn exit_code(self) -> i32 {
        if self.http_status() >= 500 && self != ErrorCode::ProviderUnavailable {
            2
        } else {
            1
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::InvalidEncoding { .. } => ErrorCode::InvalidEncoding,
            Error::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
            Error::DuplicateName(_) => ErrorCode::DuplicateName,
            Error::UnknownVertex(_) => ErrorCode::UnknownVertex,
            Error::EdgeNotFound(_) => ErrorCode::EdgeNotFound,
            Error::EdgeNotDirected(_) => ErrorCode::EdgeNotDirected,
            Error::GraphNotDag(_) => ErrorCode::GraphNotDAG,
            Error::VertexOverlap => ErrorCode::VertexOverlap,
            Error::GraphTooLarge { .. } => ErrorCode::GraphTooLarge,
            Error::InvalidZ(_) => ErrorCode::InvalidZ,
            Error::InvalidCandidate => ErrorCode::InvalidCandidate,
            Error::NoValidAdjustmentSet { .. } => ErrorCode::NoValidAdjustmentSet,
            Error::InsufficientSamples { .. } => ErrorCode::InsufficientSamples,
            Error::SingularCovariance => ErrorCode::SingularCovariance,
            Error::NonContinuousData(_) => ErrorCode::NonContinuousData,
            Error::UnknownPlugin(_) => ErrorCode::UnknownPlugin,
            Error::ProviderUnavailable(_) => ErrorCode::ProviderUnavailable,
            Error::ConflictingBeliefs(_) => ErrorCode::ConflictingBeliefs,
            Error::WouldCreateCycle(_) => ErrorCode::WouldCreateCycle,
            Error::SingularDesign => ErrorCode::SingularDesign,
            Error::DegenerateTreatment(_) => ErrorCode::DegenerateTreatment,
            Error::PropensityDegenerate => ErrorCode::PropensityDegenerate,
            Error::UnknownColumn(_) => ErrorCode::UnknownColumn,
            Error::TreatmentNotBinary(_) => ErrorCode::TreatmentNotBinary,
            Error::Parse(_) => ErrorCode::ParseError,
            Error::SessionClosed => ErrorCode::SessionClosed,
            Error::UnknownStep(_) => ErrorCode::UnknownStep,
            Error::UnknownSession(_) => ErrorCode::UnknownSession,
            Error::OutOfOrder(_) => ErrorCode::OutOfOrder,
            Error::InvalidInput(_) => ErrorCode::InvalidInput,
            Error::EstimatorRun { source, .. } => source.code(),
            Error::PayloadTooLarge => ErrorCode::PayloadTooLarge,
            Error::Json(_) => ErrorCode::InvalidInput,
            Error::Io(_) | Error::Internal(_) => ErrorCode::Internal,
        }
    }
}

/// Error payload returned by the HTTP API and printed by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_context: Option<u64>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            step_context: None,
        }
    }
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        let step_context = match e {
            Error::UnknownStep(s) => Some(*s),
            _ => None,
        };
        ApiError {
            code: e.code(),
            message: e.to_string(),
            step_context,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_through_json() {
        for code in ErrorCode::ALL {
            let s = serde_json::to_string(code).unwrap();
            assert_eq!(s, format!("\"{}\"", code.as_str()));
            let back: ErrorCode = serde_json::from_str(&s).unwrap();
            assert_eq!(back, *code);
        }
    }

    #[test]
    fn status_mapping() {
        assert_eq!(ErrorCode::OutOfOrder.http_status(), 409);
        assert_eq!(ErrorCode::TreatmentNotBinary.http_status(), 422);
        assert_eq!(ErrorCode::UnknownSession.http_status(), 404);
        assert_eq!(ErrorCode::Internal.exit_code(), 2);
        assert_eq!(ErrorCode::OutOfOrder.exit_code(), 1);
    }
}
