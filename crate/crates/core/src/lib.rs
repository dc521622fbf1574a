//! Sparse signal recovery with uniform-variance MMSE generalised approximate
//! message passing (GAMP) and a weighted Bernoulli-Gauss input prior.
//!
//! The weighted prior lets every entry `x_j` carry its own probability of
//! being non-zero, `w_j * tau`, so signals with a known non-uniform sparsity
//! profile can be recovered from fewer measurements than the i.i.d. prior
//! allows. The crate is split into:
//!
//! - [`model`]: problem instances, priors, the AWGN output channel and the
//!   iteration state;
//! - [`channels`]: scalar MMSE input/output channel functions plus a
//!   quadrature oracle that checks them;
//! - [`engine`]: the GAMP iteration itself;
//! - [`em`]: expectation-maximization learning of `tau`, the slab mean and
//!   variance, and the noise variance;
//! - [`harness`]: phase-transition sweeps, logistic transition fits and
//!   result files.
//!
//! ```
//! use wgamp::engine::gamp_run;
//! use wgamp::harness::{gen_instance, make_weights, WeightShape};
//! use wgamp::model::{AwgnOutputChannel, GampConfig, WeightedBGPrior};
//!
//! let weights = make_weights(500, &WeightShape::Uniform)?;
//! let (problem, _support) = gen_instance(250, &weights, 0.1, 0.0, 1.0, 0.0, 42)?;
//! let prior = WeightedBGPrior::new(weights, 0.1, 0.0, 1.0)?;
//! let result = gamp_run(&problem, &prior, &AwgnOutputChannel::new(0.0)?, &GampConfig::default())?;
//! assert!(result.converged);
//! # Ok::<(), wgamp::Error>(())
//! ```

pub mod channels;
pub mod em;
pub mod engine;
mod error;
pub mod harness;
pub mod model;
pub mod problem_io;

pub use error::{Error, Result};
