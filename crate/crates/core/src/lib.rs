//! Micro-browsing models for predicting which of two ad creatives gets the
//! higher click-through rate.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod rewrite;
pub mod simulate;
pub mod statsdb;

pub use error::{Error, Result};
