//! Kernel-free quadratic surface support vector machines with optional
//! `l1` regularization of the surface matrix, a dense convex QP solver to
//! train them, and diagnostics for the properties they are expected to have.
//!
//! ```
//! use qssvm_core::{datagen, models::{train, TrainConfig, Variant}};
//!
//! let data = datagen::gen_linear_separable(2, 20, 20, 7).unwrap();
//! let report = train(&data, &TrainConfig::new(Variant::L1Sqssvm).with_lambda(1.0).with_mu(8.0)).unwrap();
//! assert!(report.kkt.worst_relative() < 1e-6);
//! ```

pub mod datagen;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod halfvec;
mod linalg;
pub mod models;
pub mod qp;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use halfvec::{DesignCache, HalfVector, SymmetricMatrix};
pub use models::{QuadSurfaceModel, TrainConfig, TrainReport, Variant};
pub use qp::{QpSolution, QpStatus, QuadraticProgram, SolveOptions};
