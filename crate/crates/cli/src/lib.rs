//! Batch front end for `ecodyn`: scenario configs in, CSV and JSON artifacts
//! out. See the repository README for the config keys and output schemas.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod graph;
pub mod output;

pub use error::CliError;
