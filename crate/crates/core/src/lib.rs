//! Numerics for calibrate-emulate-sample inference in Bayesian neural networks.
//!
//! The crate is `no_std` (it needs `alloc`). Wall-clock time enters only through
//! the [`samplers::Clock`] trait, so callers decide how time is measured.

#![no_std]
// `!(x > 0.0)` is how NaN gets rejected; abort errors carry partial traces.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::result_large_err,
    clippy::needless_range_loop
)]

extern crate alloc;

pub mod baselines;
pub mod ces;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod linalg;
pub mod math;
pub mod model;
pub mod nn;
pub mod optim;
pub mod predictive;
pub mod rng;
pub mod samplers;
pub mod synthetic;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{BnnPosterior, Dataset, DatasetSplit, GaussianPriorSpec, Likelihood, NoiseModel, Task};
pub use nn::{Activation, Dropout, MlpSpec, OutputActivation, ParamVector};
