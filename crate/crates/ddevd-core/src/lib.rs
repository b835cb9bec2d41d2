//! Kernel estimation of block-maximum distributions.
//!
//! The estimator averages blockwise kernel CDF estimates raised to the block
//! size. This crate provides the estimator, the small-bandwidth expansion of
//! its integrated squared error, closed-form optimal bandwidths, an iterative
//! plug-in selector, stability analysis of the bandwidth optimization, a
//! transformation workflow and Monte Carlo evaluation.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bandwidth;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod expansion;
pub mod kernels;
pub mod plugin;
pub mod quad;
pub mod special;
pub mod stability;
pub mod transforms;

pub use distributions::{builtin_model, mev_target_cdf, sample_blocks, BaseModel, BlockedSample, Builtin};
pub use error::{Error, Result};
pub use estimator::{ddevd_density, ddevd_eval, ddevd_quantile, BandwidthVector, DdevdFit};
pub use kernels::KernelSpec;
