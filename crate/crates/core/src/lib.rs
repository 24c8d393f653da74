//! Ensemble Kalman filtering for nonlinear observations and non-Gaussian noise.
//!
//! The crate provides three analysis updates over a shared [`Ensemble`] type:
//! the stochastic (vanilla) EnKF, the conditional-Gaussian EnKF, and the
//! normal-score EnKF that runs the conditional-Gaussian update in a
//! per-dimension Gaussian latent space. Around them sit the Lorenz-96 model
//! used for twin experiments, observation operators with heavy-tailed and
//! multimodal noise, RMSE/CRPS verification, and a seeded experiment harness
//! that writes per-cycle CSV files and summary tables.
//!
//! ```no_run
//! use ensemble_da::harness::{ExperimentConfig, run_experiment};
//! use ensemble_da::filter::FilterVariant;
//!
//! let cfg = ExperimentConfig::preset("cubic-sf-comparison", FilterVariant::Cg).unwrap();
//! let report = run_experiment(&cfg).unwrap();
//! println!("{:?}", report.summary());
//! ```

pub mod ensemble;
pub mod error;
pub mod filter;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod observation;
pub mod parallel;
pub mod transform;

pub use ensemble::Ensemble;
pub use error::{Error, Result};
