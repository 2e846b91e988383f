//! Monte-Carlo harness for empirical RSTD and RE of samplers.
//!
//! Trials are embarrassingly parallel with per-trial seeds derived from a
//! master seed. The per-trial estimators here are fast paths over
//! precomputed subset rows; they compute exactly what drawing a full sample
//! and running the calibrated estimator would (same keyed uniforms, same
//! inclusion rule, same calibration), which `tests` assert.

use rayon::prelude::*;

use super::EstimateError;
use crate::kahan::KahanSum;
use crate::rng::{derive_seed, unit_uniform};
use crate::sample::gsw_key;
use crate::table::{Constraint, TimeSeriesTable};

/// Sampler configuration for one Monte-Carlo run. GSW weights travel with
/// the subset rows, not the config.
#[derive(Debug, Clone, Copy)]
pub enum SamplerConfig {
    /// GSW with the weights carried by the subset rows.
    Gsw { delta: f64 },
    /// Uniform Bernoulli with inclusion probability `p`.
    Uniform { p: f64 },
    /// Priority/threshold with fixed threshold `tau`.
    Priority { tau: f64 },
}

/// Rows matching a `(constraint, timestamp)` slice, with the columns the
/// fast-path estimators need.
#[derive(Debug, Clone)]
pub struct SubsetRows {
    pub ids: Vec<u64>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SubsetRows {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn exact_sum(&self) -> f64 {
        crate::kahan::sum(self.values.iter().copied())
    }
}

/// Collects the rows of `table` matching `(c, ts)`. `weights`, when given,
/// must be aligned to the full table; `ts = None` matches every timestamp.
pub fn subset_rows(
    table: &TimeSeriesTable,
    c: &Constraint,
    measure: &str,
    weights: Option<&[f64]>,
    ts: Option<i64>,
) -> Result<SubsetRows, EstimateError> {
    let values = table
        .measure(measure)
        .map_err(|_| crate::sample::SampleError::UnknownMeasure(measure.to_string()))?;
    if let Some(w) = weights {
        if w.len() != table.len() {
            return Err(EstimateError::LengthMismatch(w.len(), table.len()));
        }
    }
    let mut out = SubsetRows {
        ids: Vec::new(),
        values: Vec::new(),
        weights: Vec::new(),
    };
    for i in 0..table.len() {
        if ts.map_or(true, |t| table.timestamps()[i] == t) && c.eval(&table.row(i))? {
            out.ids.push(i as u64);
            out.values.push(values[i]);
            out.weights.push(weights.map_or(values[i], |w| w[i]));
        }
    }
    Ok(out)
}

/// Calibrated GSW estimate for one trial seed.
pub fn gsw_trial_estimate(rows: &SubsetRows, delta: f64, seed: u64) -> f64 {
    let mut acc = KahanSum::new();
    for ((&id, &m), &w) in rows.ids.iter().zip(&rows.values).zip(&rows.weights) {
        let u = unit_uniform(seed, id);
        if gsw_key(u, w) >= delta {
            acc.add(m + m * delta / w);
        }
    }
    acc.total()
}

/// Rescaled uniform-sample estimate for one trial seed.
pub fn uniform_trial_estimate(rows: &SubsetRows, p: f64, seed: u64) -> f64 {
    let mut acc = KahanSum::new();
    for (&id, &m) in rows.ids.iter().zip(&rows.values) {
        if unit_uniform(seed, id) <= p {
            acc.add(m / p);
        }
    }
    acc.total()
}

/// Priority-sample estimate (sum of retained variables) for one trial seed.
pub fn priority_trial_estimate(rows: &SubsetRows, tau: f64, seed: u64) -> f64 {
    let mut acc = KahanSum::new();
    for (&id, &m) in rows.ids.iter().zip(&rows.values) {
        let x = if tau <= m {
            m
        } else {
            let alpha = unit_uniform(seed, id);
            if m / alpha >= tau {
                tau
            } else {
                0.0
            }
        };
        if x > 0.0 {
            acc.add(x);
        }
    }
    acc.total()
}

fn trial_estimate(rows: &SubsetRows, cfg: &SamplerConfig, seed: u64) -> f64 {
    match cfg {
        SamplerConfig::Gsw { delta } => gsw_trial_estimate(rows, *delta, seed),
        SamplerConfig::Uniform { p } => uniform_trial_estimate(rows, *p, seed),
        SamplerConfig::Priority { tau } => priority_trial_estimate(rows, *tau, seed),
    }
}

/// Result of a Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub trials: usize,
    pub exact: f64,
    /// Mean of the estimates across trials.
    pub mean: f64,
    /// Standard deviation of the estimates across trials.
    pub sd: f64,
    /// sqrt(mean((est - exact)^2)) / exact.
    pub rstd: f64,
    /// mean(|est - exact|) / exact.
    pub re: f64,
}

impl McReport {
    /// RE never exceeds RSTD (Jensen); exposed as a sanity check.
    pub fn re_within_rstd(&self) -> bool {
        self.re <= self.rstd + 1e-12
    }

    /// Whether the trial mean is within `k` standard errors of the exact
    /// value.
    pub fn mean_within_std_errors(&self, k: f64) -> bool {
        (self.mean - self.exact).abs() <= k * self.sd / (self.trials as f64).sqrt()
    }
}

/// Runs `trials` independent sampling rounds of `cfg` against `(c, measure,
/// ts)` and reports empirical RSTD and RE. `weights` (aligned to the full
/// table) feed the GSW config; samplers that ignore them may pass `None`.
pub fn rstd_monte_carlo(
    table: &TimeSeriesTable,
    cfg: &SamplerConfig,
    weights: Option<&[f64]>,
    c: &Constraint,
    measure: &str,
    ts: i64,
    trials: usize,
    master_seed: u64,
) -> Result<McReport, EstimateError> {
    if trials < 2 {
        return Err(EstimateError::TooFewTrials(trials));
    }
    let rows = subset_rows(table, c, measure, weights, Some(ts))?;
    let exact = rows.exact_sum();
    if exact == 0.0 {
        return Err(EstimateError::ZeroTrueSum);
    }
    Ok(mc_over_rows(&rows, cfg, exact, trials, master_seed))
}

/// Monte-Carlo over precomputed subset rows. Per-trial estimates are
/// collected in trial order before reduction, so results do not depend on
/// thread scheduling.
pub fn mc_over_rows(
    rows: &SubsetRows,
    cfg: &SamplerConfig,
    exact: f64,
    trials: usize,
    master_seed: u64,
) -> McReport {
    let estimates: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial_estimate(rows, cfg, derive_seed(master_seed, t)))
        .collect();

    let mut sum = KahanSum::new();
    let mut sum_sq_err = KahanSum::new();
    let mut sum_abs_err = KahanSum::new();
    for &e in &estimates {
        sum.add(e);
        let err = e - exact;
        sum_sq_err.add(err * err);
        sum_abs_err.add(err.abs());
    }
    let n = trials as f64;
    let mean = sum.total() / n;
    let mut sum_var = KahanSum::new();
    for &e in &estimates {
        let d = e - mean;
        sum_var.add(d * d);
    }
    let sd = (sum_var.total() / (n - 1.0)).sqrt();
    McReport {
        trials,
        exact,
        mean,
        sd,
        rstd: (sum_sq_err.total() / n).sqrt() / exact,
        re: sum_abs_err.total() / n / exact,
    }
}


/// Solves for the priority threshold whose expected sample size over
/// `measures` equals `target`: E|S_tau| = sum(min(m, tau)) / tau is
/// strictly decreasing in tau.
pub fn tau_for_expected_size(measures: &[f64], target: f64) -> f64 {
    let n = measures.len() as f64;
    assert!(target > 0.0 && target < n, "target must be in (0, n)");
    let size = |tau: f64| crate::kahan::sum(measures.iter().map(|&m| m.min(tau) / tau));
    let mut lo = measures.iter().copied().fold(f64::INFINITY, f64::min) * 0.5;
    let mut hi = lo;
    while size(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if size(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Solves for the delta whose expected sample size over `weights` equals
/// `target`, by bisection (the size is strictly decreasing in delta).
pub fn delta_for_expected_size(weights: &[f64], target: f64) -> f64 {
    let n = weights.len() as f64;
    assert!(target > 0.0 && target < n, "target must be in (0, n)");
    let total: f64 = crate::kahan::sum(weights.iter().copied());
    let mut lo = 0.0f64;
    let mut hi = total / target * 2.0 + 1.0;
    let size = |delta: f64| -> f64 {
        crate::kahan::sum(weights.iter().map(|&w| w / (delta + w)))
    };
    while size(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if size(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
