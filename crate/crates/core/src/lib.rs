//! Robust change-point tests for conditionally heteroscedastic time series.
//!
//! The library implements residual-based CUSUM-of-squares tests and their
//! self-normalized counterparts for GARCH(1,1) series contaminated by
//! outliers, following a two-step robustification: estimate the model with a
//! density-power-divergence estimator, then truncate the squared residuals
//! before forming the statistic.
//!
//! Module map:
//!
//! * [`model`] - the GARCH(1,1) process, outlier mechanisms, simulation;
//! * [`estimate`] - QMLE / MDPDE fitting and squared residuals;
//! * [`detect`] - truncation, test statistics, change-point location,
//!   binary segmentation;
//! * [`limits`] - limiting null distributions and critical values;
//! * [`mcstudy`] - Monte Carlo size/power machinery;
//! * [`optim`] - the box-constrained quasi-Newton minimizer behind `fit`.

pub mod detect;
pub mod error;
pub mod estimate;
pub mod limits;
pub mod mcstudy;
pub mod model;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
