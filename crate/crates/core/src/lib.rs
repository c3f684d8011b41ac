//! Matrix-free total-variation regularization for image inverse problems:
//! denoising, deconvolution, blind deconvolution and two-frame optical flow.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The aliases at the
//! crate root fix the scalar to `f64`, which is what the CLI and the test
//! suites use.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fixtures;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod restore;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use flow::{FlowVariant, FramePair};
pub use functionals::{SmoothingAlpha, TvVariant};
pub use grid::{BoundaryRule, Field, Kernel, VectorField};
pub use scalar::Real;
pub use solvers::{InitialGuess, SolveReport, SolverConfig};

pub type ScalarField = Field<f64>;
pub type VectorField2 = VectorField<f64>;
pub type Kernel2 = Kernel<f64>;
pub type ScalarField32 = Field<f32>;
pub type VectorField2F32 = VectorField<f32>;
pub type RestoreParams = restore::RestoreParams<f64>;
pub type BlindParams = restore::BlindParams<f64>;
pub type FlowParams = flow::FlowParams<f64>;
pub type DiffusionTensorField = flow::DiffusionTensorField<f64>;
