//! Assumption-lean inference for right-censored survival data on a regular
//! time grid.
//!
//! The library is organised around a small set of building blocks:
//!
//! * [`grid`] — the discrete time grid, per-subject paths, samples, and
//!   cross-validation fold plans.
//! * [`integrate`] — grid-level Stieltjes integration against counting-process
//!   increments and left-continuous step-function evaluation.
//! * [`simulate`] — synthetic data generators: a Cox-type hazard driven by a
//!   functional covariate history, and two additive-hazard designs with a
//!   known time-varying effect.
//! * [`nuisance`] — learners for the two nuisance functions every downstream
//!   statistic needs: the predictable projection of the extra covariate and
//!   the event-intensity given the observed history.
//! * [`lcm`] — the local covariance measure: sample-split and cross-fitted
//!   estimates, a variance estimate, and the associated hypothesis test with
//!   sup-of-Brownian-motion calibration.
//! * [`acm`] — the additive covariance measure: a debiased estimate of a
//!   cumulative direct effect under an additive hazard model, with a
//!   matching closed-form oracle for the built-in designs.
//! * [`experiments`] — Monte Carlo study drivers and deterministic
//!   reproduction presets that write CSV/JSON artifacts.
//! * [`io`] — dataset (de)serialisation in a long CSV format plus JSON
//!   sidecars.
//!
//! All numeric code is generic over the scalar type via [`scalar::Real`];
//! the `F64` aliases below fix the default precision used by the CLI.

pub mod acm;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrate;
pub mod io;
pub mod lcm;
pub mod linalg;
pub mod nuisance;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stats;
pub mod supbm;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default-precision time grid.
pub type TimeGridF64 = grid::TimeGrid<f64>;
/// Default-precision subject path.
pub type SubjectPathF64 = grid::SubjectPath<f64>;
/// Default-precision sample of subject paths.
pub type SurvivalSampleF64 = grid::SurvivalSample<f64>;
/// Default-precision cross-fitted local covariance fit.
pub type LcmFitF64 = lcm::LcmFit<f64>;
/// Default-precision local covariance test result.
pub type LctResultF64 = lcm::LctResult<f64>;
/// Default-precision cross-fitted additive covariance fit.
pub type AcmFitF64 = acm::AcmFit<f64>;
