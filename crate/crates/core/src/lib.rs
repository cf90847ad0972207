//! Invariant measures of skew products with contracting fibers over
//! subshifts of finite type, computed by iterating the leafwise transfer
//! operator on disintegrated measures.

// Validation is written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cli;
pub mod error;
pub mod fiber;
pub mod ifs;
pub mod lifting;
pub mod measure;
pub mod rates;
pub mod statistics;
pub mod symbolic;
pub mod transfer;

pub use error::{Error, Result};
