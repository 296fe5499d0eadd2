use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no records")]
    NoRecords,
    #[error("record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("record {index}: field `{field}`: {reason}")]
    Invalid {
        index: usize,
        field: &'static str,
        reason: String,
    },
}

impl BenchError {
    pub(crate) fn invalid(index: usize, field: &'static str, reason: impl Into<String>) -> Self {
        BenchError::Invalid {
            index,
            field,
            reason: reason.into(),
        }
    }
}

/// Failures parsing a modality payload (series, table, value list).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PayloadError {
    #[error("missing header (expected `{expected}`)")]
    MissingHeader { expected: &'static str },
    #[error("empty series")]
    EmptySeries,
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("line {line}: non-numeric value `{cell}`")]
    NonNumeric { line: usize, cell: String },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("target column `{0}` not in header")]
    MissingTargetColumn(String),
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("no masked target cells")]
    NoMaskedTarget,
    #[error("mask cells appear in more than one column")]
    AmbiguousTarget,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: prediction has {pred} values, gold has {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("non-numeric cell `{0}` in regression target")]
    NonNumeric(String),
}

/// Errors of the query compiler and response adapter.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum InterfaceError {
    #[error("no compatible payload for backend `{backend_id}`")]
    NoCompatiblePayload { backend_id: String },
    #[error("missing required config value `{0}`")]
    MissingConfig(&'static str),
    #[error("cannot adapt failed invocation")]
    FailedInvocation,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("backend `{0}` already registered")]
    Duplicate(String),
    #[error("unknown backend `{0}`")]
    Unknown(String),
    #[error("unknown backend type `{0}`")]
    UnknownType(String),
    #[error("backend `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("registry file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AgentError {
    #[error("backend `{0}` is not registered")]
    Unregistered(String),
    #[error("backend `{id}` is a {kind}, expected {expected}")]
    WrongKind {
        id: String,
        kind: &'static str,
        expected: &'static str,
    },
    #[error("unknown control policy `{0}`")]
    UnknownPolicy(String),
    #[error("agent `{0}`: eywa agents need a foundation model, plain agents must not have one")]
    FmBinding(String),
    #[error("{0}")]
    Interface(#[from] InterfaceError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TopologyError {
    #[error("unknown topology `{0}`")]
    Unknown(String),
    #[error("topology `{name}` cannot have {n_agents} agents: {reason}")]
    Incompatible {
        name: String,
        n_agents: usize,
        reason: &'static str,
    },
    #[error("rounds must be >= 1")]
    ZeroRounds,
    #[error("unreachable: agent {from} cannot reach agent {to}")]
    Unreachable { from: usize, to: usize },
    #[error("agent index {0} out of range")]
    BadIndex(usize),
    #[error("expected {expected} agent specs, got {got}")]
    AgentCount { expected: usize, got: usize },
}

/// A rejected planner configuration; `rule` names the violated constraint.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid configuration: {rule}")]
pub struct ConfigViolation {
    pub rule: String,
}

impl ConfigViolation {
    pub(crate) fn new(rule: impl Into<String>) -> Self {
        ConfigViolation { rule: rule.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MasError {
    #[error("{0}")]
    Topology(#[from] TopologyError),
    #[error("{0}")]
    Agent(#[from] AgentError),
}

#[derive(Debug, Error)]
pub enum OrchestraError {
    #[error("empty {0} pool")]
    EmptyPool(&'static str),
    #[error("non-deterministic backend: config {config} on task {task} produced different outputs across runs")]
    NonDeterministic { config: usize, task: usize },
    #[error("{0}")]
    Topology(#[from] TopologyError),
    #[error("{0}")]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Config(#[from] ConfigViolation),
    #[error("{0}")]
    Mas(#[from] MasError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Registry(#[from] RegistryError),
    #[error("invalid system selector `{0}`")]
    BadSystem(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 1 for configuration errors, 2 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) | HarnessError::Bench(BenchError::Io { .. }) => 2,
            _ => 1,
        }
    }
}
