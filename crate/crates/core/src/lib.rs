//! Discrete-time Hawkes processes with inhibition: the Poisson autoregressive
//! chain `X_t ~ Poisson((a₁X_{t−1} + … + a_pX_{t−p} + λ)₊)`.
//!
//! The analytic modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod classify;
pub mod cubic;
pub mod drift;
pub mod experiments;
pub mod model;
pub mod scalar;
pub mod simulate;
pub mod special;
pub mod stats;

pub use classify::{classify, Verdict};
pub use error::{Error, Result};
pub use model::State;
pub use scalar::Real;
pub use simulate::{ExcursionOutcome, OutcomeKind, SimConfig};

pub type Params = model::Params<f64>;
pub type CubicReport = cubic::CubicReport<f64>;
pub type RegionLabel = classify::RegionLabel<f64>;
pub type DriftReport = drift::DriftReport<f64>;
pub type ConfidenceInterval = stats::ConfidenceInterval<f64>;
