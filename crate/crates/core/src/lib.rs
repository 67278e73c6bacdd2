//! Approximate John ellipsoids of symmetric polytopes `{x : |Ax|_inf <= 1}`.
//!
//! Solvers return the quadratic `Q = A^T W A` of an ellipsoid
//! `E = {x : x^T Q x <= 1}` with `E / sqrt(1 + eps) ⊆ P ⊆ sqrt(d) E`, together
//! with the weights `w` behind it. Everything is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix `f64`.

pub mod bench;
pub mod certify;
pub mod cli;
pub mod error;
pub mod fixed_point;
pub mod io;
pub mod lazy;
pub mod leverage;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod streaming;

pub use certify::{certify, Certificate};
pub use error::{Error, Result};
pub use fixed_point::{solve_baseline, EllipsoidResult, SolverConfig};
pub use lazy::{solve_lazy, LazyConfig};
pub use scalar::Scalar;
pub use streaming::{solve_streaming, RowStream, StreamingConfig};

pub type Matrix = linalg::DenseMatrix<f64>;
pub type Matrix32 = linalg::DenseMatrix<f32>;
pub type Form = linalg::SpdForm<f64>;
pub type Form32 = linalg::SpdForm<f32>;
pub type Weights = leverage::WeightVector<f64>;
pub type Ellipsoid = fixed_point::EllipsoidResult<f64>;
