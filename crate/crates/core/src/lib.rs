//! Comparator-adaptive online wavelet regression with gradient clipping.
//!
//! The crate is `no_std` and only needs `alloc`. It is organised bottom-up:
//!
//! - [`bettor`]: a one-dimensional coin-betting learner constrained to `[-C, C]`.
//! - [`clipper`]: per-coordinate clipping of noisy gradients and the noise-aware
//!   margin schedule, driving one bettor per coordinate.
//! - [`aggregator`]: scale-free second-order expert weights and the meta-learner
//!   that aggregates clipped learners running at different margins.
//! - [`wavelet`]: the periodized Haar basis on `[0,1)^d`, coefficient trees and
//!   the Besov sequence norm.
//! - [`regression`]: the online wavelet regressor mixing wavelet experts.
//! - [`batch`]: data generation, online-to-batch averaging and `L2` risk.
//!
//! IO, configuration files and the command line live in the `clipwave` crate.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aggregator;
pub mod batch;
pub mod bettor;
pub mod clipper;
mod error;
pub(crate) mod math;
pub mod regression;
pub mod wavelet;

pub use error::{Error, Result};
