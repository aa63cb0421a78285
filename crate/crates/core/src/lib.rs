// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pathsim;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod tree;

pub use error::{Error, Result};
