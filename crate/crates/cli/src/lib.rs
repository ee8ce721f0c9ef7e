//! Command-line pipeline: configuration, stages, artifacts and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;
