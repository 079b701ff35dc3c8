// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caputo;
pub mod direct;
pub mod error;
pub mod experiments;
pub mod inverse;
pub mod mesh;
pub mod metrics;
pub mod problems;
pub mod quadrature;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
