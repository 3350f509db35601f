//! Streaming speech segmentation with a language-model second opinion.
//!
//! The pipeline: a silence-timeout endpointer proposes segment boundaries
//! over a timestamped word stream ([`endpoint`]), a recurrent end-of-segment
//! tagger scores each proposal ([`tagger`]), and a fusion state machine
//! combines the two under one of three policies ([`fusion`]):
//!
//! - v1: silence timeout only
//! - v2: timeout gated by the tagger's end-of-segment probability
//! - v3: like v2, but the tagger sees one word of look-ahead
//!
//! [`corpus`] builds tagger training data from plain text, and [`metrics`]
//! scores segmentations with precision/recall/F0.5.
//!
//! All tagger math is generic over the scalar type (see [`scalar::Scalar`]);
//! `f32` is the on-disk and default runtime type, `f64` is used where tests
//! need tight numeric tolerances.

pub mod cli;
pub mod corpus;
pub mod endpoint;
pub mod fusion;
pub mod metrics;
pub mod scalar;
pub mod tagger;

pub use scalar::Scalar;

/// Scalar type used by the CLI and the on-disk model format.
pub type DefaultScalar = f32;

/// Tagger model at the default (on-disk) precision.
pub type TaggerModelF32 = tagger::TaggerModel<f32>;
/// Tagger model at double precision, for numerics-sensitive work.
pub type TaggerModelF64 = tagger::TaggerModel<f64>;
