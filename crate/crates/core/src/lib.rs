//! Spherical feature transforms for deep metric learning.
//!
//! Feature augmentation on the unit hypersphere: features of one class are
//! carried onto another class by the rotation that maps the source class mean
//! direction onto the target mean direction. The crate provides
//!
//! - the rotation-based transform, its translation-based predecessor, and the
//!   degenerate translate-then-reproject variant ([`sphere`]);
//! - streaming class-center estimation, scatter matrices, and the spectral
//!   diagnostics that justify the rotation prior ([`stats`]);
//! - balanced and unbalanced batch augmentation schedules ([`scheduler`]);
//! - a small deterministic training harness with a linear embedding model,
//!   triplet loss, and hand-rolled gradients ([`train`]);
//! - a generator for controlled spherical class distributions, including
//!   long-tailed samplings ([`synth`]).
//!
//! All randomness is driven by explicit seeds; identical inputs produce
//! byte-identical outputs.

pub mod error;
pub mod scheduler;
pub mod sphere;
pub mod stats;
pub mod synth;
pub mod train;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Result, SftError};
pub use sphere::{ClassId, FeatureVector, RotationMatrix, RotationPlan};
pub use stats::{ClassCenters, GaussianApprox, ScatterReport};
