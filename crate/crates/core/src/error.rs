use thiserror::Error;

/// Errors raised while building or querying a factored model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension `{0}` must have at least two values")]
    DegenerateDimension(String),
    #[error("dimension `{0}` has more than 65535 values")]
    DimensionTooLarge(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateDimension(String),
    #[error("duplicate value `{value}` in dimension `{dim}`")]
    DuplicateValue { dim: String, value: String },
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown value `{value}` for dimension `{dim}`")]
    UnknownValue { dim: String, value: String },
    #[error("state space size overflows 128 bits")]
    SpaceTooLarge,
    #[error("state has {got} components, space has {expected} dimensions")]
    StateArity { expected: usize, got: usize },
    #[error("value index {value} out of range for dimension `{dim}`")]
    ValueOutOfRange { dim: String, value: usize },
    #[error("rule {index}: {reason}")]
    InvalidRule { index: usize, reason: String },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action index {0} out of range")]
    ActionOutOfRange(usize),
    #[error("a model needs at least one action")]
    NoActions,
    #[error("invalid decision tree: {0}")]
    InvalidTree(String),
    #[error("invalid road graph: {0}")]
    InvalidGraph(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Errors raised by worldview manipulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldviewError {
    #[error("worldview state {0} is not present")]
    Absent(u32),
    #[error("worldview state {id} is not abstract in dimension {dim}")]
    NotAbstract { id: u32, dim: usize },
    #[error("group cannot be coarsened in dimension {dim}: {reason}")]
    BadGroup { dim: usize, reason: String },
    #[error("partition breach: state matched {0} worldview states")]
    PartitionBreach(usize),
    #[error("worldview size {size} exceeds the configured cap of {cap} states")]
    CapExceeded { size: usize, cap: usize },
}

/// Errors raised by the planner and the experiment drivers.
#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Worldview(#[from] WorldviewError),
    #[error("state space has {size} states, above the enumeration cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;
