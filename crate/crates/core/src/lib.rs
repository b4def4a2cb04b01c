//! Prediction of the number of unseen species.
//!
//! Given a sample of `n` observations, the estimators here predict how many
//! new distinct symbols would appear in a further `t·n` observations. The
//! central family is the smoothed Good–Toulmin estimator: the classical
//! alternating Good–Toulmin series with its coefficients attenuated by the
//! tail of a smoothing distribution, which keeps the variance bounded when
//! `t > 1`.
//!
//! ```
//! use unseen_core::prevalence::PrevalenceHistogram;
//! use unseen_core::estimators::{estimate_unseen, SmoothingScheme};
//!
//! let hist = PrevalenceHistogram::from_pairs([(1, 118), (2, 74), (3, 44)]).unwrap();
//! let est = estimate_unseen(&hist, 2.0, SmoothingScheme::BinomialOpt, true).unwrap();
//! assert!(est.value >= 0.0);
//! ```

pub mod baselines;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod harness;
pub mod numeric;
pub mod oracles;
pub mod prevalence;
pub mod sampling;
pub mod smoothing;

pub use error::{Error, Result};
