//! Correlation stress testing for asset portfolios.
//!
//! Pairwise correlations are modelled as `tanh` of a linear score in the
//! assets' factor exposures ([`corrmodel`]). Exposures are chosen per asset by
//! Bayesian variable selection ([`factorselect`]); the history of calibrated
//! coefficients is fitted with a multivariate normal-inverse-Gaussian law
//! ([`distfit`]), which bounds the plausible scenarios searched by the reverse
//! stress test ([`stress`]). [`ingest`] turns price files into aligned return
//! panels and schedules.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrmodel;
pub mod distfit;
mod error;
pub mod factorselect;
pub mod ingest;
pub mod linalg;
pub mod rng;
pub mod special;
pub mod stress;

pub use error::{Error, Result};
