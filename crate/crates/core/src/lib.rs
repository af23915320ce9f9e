//! Analysis of singularly perturbed linear switching systems
//! `x' = A x + B y`, `eps y' = C x + D y`.
//!
//! The core is generic over the real scalar ([`Scalar`], implemented for `f32`
//! and `f64`); the aliases below fix it to `f64`.

// `!(x > 0)` is the NaN-rejecting form of a positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod error;
pub mod example;
pub mod flows;
pub mod format;
pub mod inclusion;
pub mod lyapunov;
pub mod matkit;
pub mod model;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use format::{fmt17, to_json17};
pub use scalar::Scalar;

pub type Matrix = matkit::Mat<f64>;
pub type Mode = model::BlockMode<f64>;
pub type System = model::BlockSystem<f64>;
pub type Signal = model::PwcSignal<f64>;
pub type Bound = lyapunov::LyapunovBound<f64>;
pub type Cloud = inclusion::PointCloud<f64>;
pub type Parts = auxiliary::LambdaParts<f64>;

pub type Matrix32 = matkit::Mat<f32>;
pub type System32 = model::BlockSystem<f32>;
pub type Signal32 = model::PwcSignal<f32>;
