use thiserror::Error;

/// Errors raised by lattice construction, observable algebra and the
/// verification machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("site ({t}, {x}) is outside the lattice")]
    SiteOutOfBounds { t: usize, x: usize },

    #[error("region is empty")]
    EmptyRegion,

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("kernel kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("mode {0} has no real frequency")]
    ModeSingular(usize),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("truncation overflow: degree ({sym}, {ext}) exceeds ({d_max}, {a_max})")]
    TruncationOverflow {
        sym: usize,
        ext: usize,
        d_max: usize,
        a_max: usize,
    },

    #[error("support is not contained in the target region")]
    NotContained,

    #[error("regions are not pairwise disjoint")]
    NotDisjoint,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("block of size {size} exceeds the cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("bad ordering: {0}")]
    BadOrdering(String),

    #[error("unknown reference: {0}")]
    UnknownReference(String),
}

pub type Result<T> = std::result::Result<T, Error>;
