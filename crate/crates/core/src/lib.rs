//! Variant-product matching toolkit.
//!
//! Scores and metrics are generic over [`scalar::Scalar`] (`f32` or `f64`).
//! The aliases below fix the scalar to `f64`; the `*32` forms use `f32`.

pub mod attrkit;
pub mod catalog;
pub mod concurrency;
pub mod evalkit;
pub mod matchkit;
pub mod pairforge;
pub mod prompt;
pub mod provenance;
pub mod scalar;
pub mod text;

pub use scalar::Scalar;

pub type MatchScore = matchkit::MatchScore<f64>;
pub type MatchVerdict = matchkit::MatchVerdict<f64>;
pub type BaselineScore = matchkit::BaselineScore<f64>;
pub type MetricsReport = evalkit::MetricsReport<f64>;
pub type CurvePoint = evalkit::CurvePoint<f64>;
pub type AttrAccuracy = evalkit::AttrAccuracy<f64>;
pub type RecallSummary = evalkit::RecallSummary<f64>;
pub type ExperimentRow = evalkit::ExperimentRow<f64>;

pub type MatchScore32 = matchkit::MatchScore<f32>;
pub type MatchVerdict32 = matchkit::MatchVerdict<f32>;
pub type MetricsReport32 = evalkit::MetricsReport<f32>;
pub type CurvePoint32 = evalkit::CurvePoint<f32>;
