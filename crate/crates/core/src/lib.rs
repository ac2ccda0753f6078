//! Exterior-derivative regression on manifolds.
//!
//! When predictors are collinear, or more generally concentrated near a
//! lower-dimensional manifold, the regression gradient is not identified in
//! directions normal to that manifold. The exterior derivative, the part of
//! the gradient along the tangent space, still is. The estimators here fit
//! a (locally weighted) linear model whose coefficients are pulled toward
//! the tangent space estimated by local principal components:
//!
//! ```text
//! beta = argmin  |W^{1/2} (Y - X b)|^2  +  lambda |P b|^2  [ + mu sum_j |b_j| / |pilot_j|^gamma ]
//! ```
//!
//! where `P` projects onto the trailing eigenvectors of the local
//! covariance. Variants add covariance thresholding for large `p` and a
//! correction for noisy predictors.
//!
//! ```
//! use exderiv::estimators::{fit, EstimatorConfig, EstimatorKind};
//! use exderiv::simdata::generate_linear;
//!
//! let inst = generate_linear(8, 500, 0.01, 1.0, 7).unwrap();
//! let cfg = EstimatorConfig::new(EstimatorKind::Ede).with_lambda(1.0).with_d(7);
//! let est = fit(&inst.data, &cfg, None).unwrap();
//! let err = (est.beta_at(&inst.x0) - &inst.beta_true).norm_squared();
//! assert!(err < 1.0);
//! ```
//!
//! The `book/` directory at the repository root walks through the method
//! chapter by chapter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod localgeom;
pub mod selection;
pub mod simdata;
pub mod solvers;

pub use data::{load_csv, read_csv, DataSet};
pub use error::{Error, Result};
pub use estimators::{fit, Estimate, EstimatorConfig, EstimatorKind};
pub use kernel::Kernel;
