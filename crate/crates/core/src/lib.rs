//! Significance tests for variables entering lasso and forward-stepwise
//! regression paths.
//!
//! Two tests are provided. The covariance test compares fitted inner products
//! of the full and restricted lasso at the next knot and is referred to an
//! Exp(1) law. The Gumbel-corrected test subtracts `2 log m - log log m` from
//! the maximal RSS drop over the `m` remaining candidates and is referred to
//! Gumbel(-log π, 2); its likelihood-ratio form covers logistic and Cox
//! models. The [`montecarlo`] module reproduces calibration experiments for
//! both.
//!
//! Variable indices are 0-based throughout the API. Exported records
//! ([`TestRecord`], CSV tables) and warning messages are 1-based.

pub mod error;
pub mod glm;
pub mod io;
pub mod lasso_path;
pub mod linmodel;
pub mod montecarlo;
pub mod selection;

pub use error::{Error, Result};
pub use lasso_path::{kkt_check, lars_path, lasso_solve, KktReport, Knot, KnotAction, LassoPath};
pub use linmodel::{estimate_sigma2, least_squares, r_stat, standardize, Dataset, SubsetFit};
pub use selection::{lasso_steps, stepwise_path, SelectionPath, SelectionStep, Selector};
pub use sig_tests::{
    covariance_test, gumbel_cdf, gumbel_correction, gumbel_quantile, gumbel_test, GumbelRef,
    Reference, TestKind, TestOutcome, TestRecord,
};
