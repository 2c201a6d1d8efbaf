use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("data length {len} does not match shape {shape:?} (expected {expected})")]
    ShapeMismatch {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },

    #[error("contraction pair ({left}, {right}) joins extents {left_extent} and {right_extent}")]
    DimensionMismatch {
        left: usize,
        right: usize,
        left_extent: usize,
        right_extent: usize,
    },

    #[error("index {index} out of range for tensor of order {order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("index {0} appears in more than one contraction pair")]
    RepeatedIndex(usize),

    #[error("partition mismatch: {0}")]
    Partition(String),

    #[error("the all-zeros tensor does not define a state")]
    ZeroTensor,

    #[error("materialization needs {required} entries, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error("construction needs {required} raw external legs, budget is {budget}")]
    LegBudgetExceeded { required: usize, budget: usize },

    #[error("invalid tensor network: {0}")]
    Network(String),

    #[error("duplication group {group} mixes extents {first} and {other}")]
    GroupExtentMismatch { group: usize, first: usize, other: usize },

    #[error("invalid circuit specification: {0}")]
    Spec(String),

    #[error("weights do not match specification: {0}")]
    Weights(String),

    #[error("basis configuration invalid: {0}")]
    Config(String),

    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
