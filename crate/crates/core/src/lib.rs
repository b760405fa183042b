//! Density at a quantile for right-censored data.
//!
//! The main estimator perturbs the Kaplan-Meier quantile with Gaussian noise
//! and regresses the CDF response on the noise ([`resampler`]); the noise
//! scale is chosen by a plateau search over a grid ([`select`]). An IPCW
//! kernel estimator ([`kde`]) serves as the baseline and [`sim`] runs the
//! Monte-Carlo comparisons.
//!
//! ```
//! use quantile_density::{km_fit, ls_density, LsConfig, SurvivalSample};
//!
//! let sample = SurvivalSample::from_slices(
//!     &[0.2, 0.5, 0.7, 1.1, 1.6, 2.3],
//!     &[true, true, false, true, true, false],
//! )?;
//! let curve = km_fit(&sample)?;
//! let est = ls_density(&curve, 0.5, &LsConfig::new(10_000, 1.0, 7)?)?;
//! assert!(est.value > 0.0);
//! # Ok::<(), quantile_density::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod io;
pub mod kde;
pub mod resampler;
pub mod rng;
pub mod select;
pub mod sim;
pub mod survival;

pub use error::{Error, Result};
pub use kde::{cv_bandwidth, cv_score, kde_at_quantile, kde_density, KdeConfig, KdeEstimate};
pub use resampler::{conditional_expectation_oracle, ls_density, LsConfig, LsEstimate};
pub use select::{grid_estimates, select_sigma, EstimateTrace, SigmaGrid, SigmaSelection};
pub use survival::{km_fit, km_fit_censoring, Observation, QuantileEstimate, StepCdf, SurvivalSample};
