//! Parallel maximum-likelihood fitting.
//!
//! Variables feed densities, densities compose, and a [`fit::FitManager`]
//! binds a model to a dataset and minimizes its negative log-likelihood.
//!
//! ```text
//! Registry (variables) ─┬─> PdfTree (gaussian, add, prod, dalitz, ...)
//!                       └─> DataSet (unbinned SoA columns | binned)
//!                                 │
//!            Engine (serial | pool backend, normalization cache)
//!                                 │
//!                 FitManager (BFGS + bounds + Hessian errors)
//! ```

// `!(x > 0.0)` is how NaN gets rejected alongside the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod amplitude;
pub mod cli;
pub mod dataset;
pub mod distributed;
pub mod engine;
pub mod error;
pub mod fit;
pub mod mcgen;
pub mod pdf;
pub mod quadrature;
pub mod summation;
pub mod variable;

pub use error::{Error, Result};
