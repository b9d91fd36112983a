// NaN-propagating validation guards (`!(v > 0.0)`) are used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Complexity-regularized maximum-likelihood completion of noisy, partially
//! observed 3-way tensors with a sparse CP factor.
//!
//! The crate is organized as:
//! - [`tensor`]: dense 3-way tensors, CP factors, Khatri-Rao products and
//!   mode unfoldings;
//! - [`sampling`]: Bernoulli observation masks and Gaussian measurements
//!   with reproducible seed derivation;
//! - [`likelihood`]: Gaussian observation model (negative log-likelihood,
//!   gradients, divergences);
//! - [`solver`]: the ADMM solver with box-constrained factor updates and an
//!   L0-penalized sparse factor;
//! - [`theory`]: quantization levels, penalty codelengths, regularizer and
//!   error-bound formulas, plus an exhaustive Kraft-inequality audit;
//! - [`experiment`]: synthetic sweep harness reproducing the sampling-rate
//!   versus error scaling study;
//! - [`fileio`]: plain-text file formats used by the CLI.

pub mod error;
pub mod experiment;
pub mod fileio;
pub mod likelihood;
pub mod sampling;
pub mod solver;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, LambdaPolicy, SweepResult};
pub use likelihood::GaussianModel;
pub use sampling::{derive_seed, observe_gaussian, sample_bernoulli_mask, Observations, SampleSet};
pub use solver::{solve, solve_with_audit, Bounds, SolveResult, SolverConfig};
pub use tensor::{cp_reconstruct, khatri_rao, CpFactors, Tensor3};
pub use theory::TheoryParams;
