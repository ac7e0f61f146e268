//! Conditional distribution regression with deep generative sieves.
//!
//! The crate fits a conditional generator `Y = g(Z, X) + σ ε` by maximising a
//! variational lower bound of the conditional log-likelihood, over ReLU
//! networks whose depth, width, sparsity and weight bound follow a sieve
//! schedule driven by the sample size. Around that sit a small reverse-mode
//! autodiff tape, synthetic benchmark generators, evaluation metrics and
//! closed-form rate calculators.
//!
//! Heavy loops run through [`par`], which uses rayon when the `parallel`
//! feature is on and falls back to plain iteration otherwise. Results are
//! identical in both modes.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod genmodel;
pub mod mat;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod par;
pub mod rates;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
pub use genmodel::{CvaeArch, CvaeModel, SigmaBounds, TrainConfig};
pub use mat::Mat;
pub use synthdata::Dataset;
