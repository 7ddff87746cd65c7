use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the toolkit.
///
/// Variants fall into three families, mirrored by [`Error::kind`]: input
/// validation (bad files, inconsistent scenarios, invalid plans), sampler
/// infeasibility, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precinct {0:?} has an edge to itself")]
    SelfLoop(String),
    #[error("duplicate edge between {0:?} and {1:?}")]
    DuplicateEdge(String, String),
    #[error("duplicate precinct id {0:?}")]
    DuplicatePrecinct(String),
    #[error("unknown precinct {0:?}")]
    UnknownPrecinct(String),
    #[error("graph is disconnected: precinct {0:?} is unreachable from {1:?}")]
    Disconnected(String, String),
    #[error("node subset is not connected")]
    DisconnectedSubset,
    #[error("invalid attribute on precinct {precinct:?}: {reason}")]
    InvalidAttribute { precinct: String, reason: String },
    #[error("scenario {scenario:?}, precinct {precinct:?}: {reason}")]
    ScenarioMismatch {
        scenario: String,
        precinct: String,
        reason: String,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid district count {0}")]
    InvalidDistrictCount(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("total population is zero")]
    ZeroPopulation,
    #[error("precinct {0:?} has zero population")]
    ZeroPopulationPrecinct(String),
    #[error("district {0} has zero two-party vote")]
    ZeroTwoPartyVote(u32),
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("posterior for voter {voter:?} vanishes: {reason}")]
    ZeroPosterior { voter: String, reason: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Infeasible,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Infeasible(_) => ErrorKind::Infeasible,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
