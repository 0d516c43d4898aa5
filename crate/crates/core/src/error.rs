use thiserror::Error;

/// Structural problems with a scenario model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("stage {stage}: invalid partition: {reason}")]
    BadPartition { stage: String, reason: String },
    #[error("stage {stage}: {reason}")]
    BadTerminals { stage: String, reason: String },
    #[error("stage {stage} atom {atom} is not contained in a single atom of stage {earlier}")]
    NonRefining {
        stage: String,
        atom: usize,
        earlier: String,
    },
    #[error("reference measure has non-positive weight on outcome {outcome}")]
    NoFullSupport { outcome: usize },
    #[error("reference measure: {0}")]
    BadReference(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("financial partition at time {time} is not coarser than the global partition")]
    NotCoarser { time: usize },
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::BadGrid(_) => "BAD_GRID",
            ModelError::BadPartition { .. } => "BAD_PARTITION",
            ModelError::BadTerminals { .. } => "BAD_TERMINALS",
            ModelError::NonRefining { .. } => "NON_REFINING",
            ModelError::NoFullSupport { .. } => "NO_FULL_SUPPORT",
            ModelError::BadReference(_) => "BAD_REFERENCE",
            ModelError::OutOfRange(_) => "OUT_OF_RANGE",
            ModelError::NotCoarser { .. } => "NOT_COARSER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("objects are defined on different scenario models")]
    ModelMismatch,
    #[error("no measure in the set charges atom {atom} of stage {stage}")]
    EmptyKernel { stage: String, atom: usize },
    #[error("the set is empty")]
    EmptySet,
    #[error("the intersection is empty")]
    EmptyIntersection,
    #[error("{what}: size {size} exceeds bound {bound}")]
    TooLarge {
        what: &'static str,
        size: usize,
        bound: usize,
    },
    #[error("claim is not measurable at stage {stage}")]
    NotMeasurable { stage: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Model(m) => m.code(),
            Error::InvalidMeasure(_) => "INVALID_MEASURE",
            Error::Dimension { .. } => "DIMENSION",
            Error::ModelMismatch => "MODEL_MISMATCH",
            Error::EmptyKernel { .. } => "EMPTY_KERNEL",
            Error::EmptySet => "EMPTY_SET",
            Error::EmptyIntersection => "EMPTY_INTERSECTION",
            Error::TooLarge { .. } => "TOO_LARGE",
            Error::NotMeasurable { .. } => "NOT_MEASURABLE",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Internal(_) => "INTERNAL",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
