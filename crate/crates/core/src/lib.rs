//! Parametric nonlinear least squares when the regressor is a Harris
//! recurrent Markov chain, stationary or null recurrent.
//!
//! The crate is organised around the estimation pipeline:
//!
//! - [`chains`] simulates the supported chain families and computes the
//!   observable recurrence diagnostics (hitting counts, the log-ratio
//!   estimate of the recurrence index β, occupation ratios).
//! - [`models`] holds the regression and volatility function families with
//!   analytic derivatives and their integrable / asymptotically homogeneous
//!   class metadata, together with dataset generation.
//! - [`estimation`] implements the NLS, truncated NLS and log-transformed
//!   volatility losses and the box-constrained optimizer minimising them.
//! - [`inference`] builds plug-in covariance matrices and confidence
//!   intervals from observable quantities only.
//! - [`nonparametric`] provides Nadaraya-Watson regression with
//!   leave-one-out bandwidth selection and polynomial calibration.
//! - [`montecarlo`] is the replication harness used for simulation studies.

pub mod chains;
pub mod config;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod models;
pub mod montecarlo;
pub mod nonparametric;
pub mod normal;
pub mod quadrature;
pub mod report;
pub mod rng;

pub use chains::{ChainFamily, ChainSpec, Interval, RecurrenceDiagnostics, Trajectory};
pub use error::{Error, Result};
pub use estimation::{EstimateResult, Estimator, OptimizerConfig, TruncationPlan};
pub use models::{Dataset, FunctionClass, NoiseLaw, NoiseSpec, RegressionModel, VolatilityModel};
