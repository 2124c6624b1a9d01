//! Finite-N spectral statistics of H = AA† + BB†, the sum of two independent
//! correlated complex Wishart matrices.

// `!(a < b)` is used on purpose so that NaN fails range checks, and index
// loops read better than iterator chains in the dense linear algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod charpoly;
pub mod curve;
pub mod error;
pub mod halfdeg;
pub mod linalg;
pub mod quadrature;
pub mod saddle;
pub mod sampler;
pub mod special;
pub mod susy;

pub use error::{Error, Result};
