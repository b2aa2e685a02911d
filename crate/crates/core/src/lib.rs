//! Optimal and learned linear regularizers for linear inverse problems
//! `y = A x + ε`.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which the experiment pipelines and file
//! formats use.

pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod io_util;
pub mod linalg;
pub mod moments;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type SymMatrix = linalg::SymmetricMatrix<f64>;
pub type Moments = moments::ProblemMoments<f64>;
pub type Dataset = moments::PairedDataset<f64>;
pub type Map = estimators::AffineMap<f64>;
pub type Regularizer = estimators::RegularizerParams<f64>;
pub type Params = trainer::TrainableParams<f64>;

pub type Matrix32 = nalgebra::DMatrix<f32>;
pub type Dataset32 = moments::PairedDataset<f32>;
pub type Moments32 = moments::ProblemMoments<f32>;
