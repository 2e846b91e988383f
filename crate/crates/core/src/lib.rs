//! Sampling-based approximate aggregation and forecasting over time-series
//! relations.
//!
//! The library is organized around five building blocks:
//!
//! - [`table`]: an immutable columnar relation with dimensions, positive
//!   measures and integer timestamps, plus constraint evaluation and an
//!   exact aggregation path.
//! - [`sample`]: smoothed weighted (GSW) sampling with incremental
//!   maintenance and multi-layer ladders, plus uniform and priority
//!   baselines.
//! - [`estimate`]: calibrated subset-sum estimation from samples, with
//!   analytic relative-error bounds and a Monte-Carlo harness.
//! - [`group`]: shared sampling weights for groups of measures (geometric
//!   or arithmetic means) selected by greedy k-center clustering.
//! - [`forecast`]: ARMA/ARIMA fitting on (possibly noisy) aggregate series
//!   and interval forecasts that account for estimation noise.

pub mod estimate;
pub mod forecast;
pub mod group;
pub mod kahan;
pub mod rng;
pub mod sample;
pub mod table;
