//! KiaiTime core: chart model, audio ingest, the frame classifier, designer
//! adaptation, calibration and the co-editing session service.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the binaries.

pub mod adapt;
pub mod calibration;
pub mod chart;
pub mod ingest;
pub mod model;
pub mod scalar;
pub mod session;

/// Precision used by the server and CLI.
pub type Real = f32;
pub type Model = model::ModelParams<Real>;
pub type ModelF32 = model::ModelParams<f32>;
pub type ModelF64 = model::ModelParams<f64>;
pub type Features = ingest::FeatureMatrix<Real>;
pub type Instance = model::TrainingInstance<Real>;
pub type Adaptation = adapt::AdaptationState<Real>;
