use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} does not hold {len} values")]
    ShapeData { shape: Vec<usize>, len: usize },

    #[error("zero-sized dimension in shape {0:?}")]
    EmptyDimension(Vec<usize>),

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{op}: argument outside the function domain")]
    Domain { op: &'static str },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward requires a single-element output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("gradient target {0} is not connected to the output")]
    Disconnected(usize),

    #[error("batch statistics need at least 2 rows, got {0}")]
    BatchStatistics(usize),

    #[error("variables belong to different graphs")]
    ForeignVariable,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
