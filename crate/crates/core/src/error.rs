//! Error type shared by all modules.

use crate::sphere::ClassId;

pub type Result<T> = std::result::Result<T, SftError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SftError {
    #[error("vector norm below 1e-15, cannot normalize")]
    ZeroNorm,
    /// The two mean directions do not span a plane. `antipodal` distinguishes
    /// opposite directions (rotation non-unique, always rejected) from
    /// parallel ones (identity rotation is the continuous limit).
    #[error("mean directions are {} (|cos| = {cos_abs})", if *.antipodal { "antipodal" } else { "parallel" })]
    DegeneratePlane { antipodal: bool, cos_abs: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("need at least 2 classes, got {got}")]
    InsufficientClasses { got: usize },
    #[error("no center stored for class {0}")]
    MissingCenter(ClassId),
    #[error("no samples for class {0}")]
    EmptyClass(ClassId),
    #[error("trace of within-class scatter is below 1e-15")]
    ZeroWithinScatter,
    #[error("eigenvector count k = {k} outside 1..={dim}")]
    InvalidSubspaceSize { k: usize, dim: usize },
    #[error("fewer than 2 classes have centers; no augmentation target exists")]
    NoEligibleTarget,
    #[error("no class falls below the tail threshold")]
    NoTailClasses,
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("batch contains no valid (anchor, positive, negative) triplet")]
    NoValidTriplets,
    #[error("no query has a same-class neighbor; recall@1 is undefined")]
    NoPositivePairs,
    #[error("test set is empty or single-class")]
    EmptyTestSet,
    #[error("could not place {classes} mean directions at >= {min_separation_deg} deg separation in {dim} dimensions")]
    InfeasibleSeparation {
        classes: usize,
        dim: usize,
        min_separation_deg: f64,
    },
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
}
