//! Sampler-comparison benchmark.
//!
//! For each (sampler, sampling rate, selectivity) cell the harness runs
//! independent sampling trials against a table whose per-timestamp totals
//! follow a known process: it measures per-trial aggregation RSTD/RE over
//! the training window, fits a model on the estimated series, and scores
//! the forecast against the exact future totals. Sampler parameters are
//! solved from the rate (delta, tau or p giving the same expected sample
//! size), so cells are comparable at equal space budgets.

use std::fmt::Write as _;

use rayon::prelude::*;

use aggcast_core::estimate::monte_carlo::{
    delta_for_expected_size, gsw_trial_estimate, priority_trial_estimate, subset_rows,
    tau_for_expected_size, uniform_trial_estimate, SubsetRows,
};
use crate::pipeline::EngineError;
use aggcast_core::forecast::{fit_arima, forecast, AggregateSeries};
use aggcast_core::group::{mean_weights, MeanKind};
use aggcast_core::kahan;
use aggcast_core::rng::derive_seed;
use aggcast_core::table::{CmpOp, Constraint, Literal, TimeSeriesTable};

/// Samplers the benchmark can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchSampler {
    Uniform,
    Priority,
    OptimalGsw,
    GeoCompressedGsw,
    ArithCompressedGsw,
}

impl BenchSampler {
    pub fn name(&self) -> &'static str {
        match self {
            BenchSampler::Uniform => "uniform",
            BenchSampler::Priority => "priority",
            BenchSampler::OptimalGsw => "opt-gsw",
            BenchSampler::GeoCompressedGsw => "geo-gsw",
            BenchSampler::ArithCompressedGsw => "arith-gsw",
        }
    }

    pub const ALL: [BenchSampler; 5] = [
        BenchSampler::Uniform,
        BenchSampler::Priority,
        BenchSampler::OptimalGsw,
        BenchSampler::GeoCompressedGsw,
        BenchSampler::ArithCompressedGsw,
    ];
}

/// Benchmark configuration.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Sampling rates (expected sample size / table size); a rate >= 1 is
    /// the exact (delta = 0) row.
    pub rates: Vec<f64>,
    /// Selectivities of the synthetic constraint `Bucket < 1000 s`.
    pub selectivities: Vec<f64>,
    pub trials: usize,
    /// Training timestamps (the first `train_len` of the domain).
    pub train_len: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Orders for the per-trial fit.
    pub orders: (usize, usize, usize),
    /// Measure being estimated; the compressed samplers share weights with
    /// `companion`.
    pub measure: String,
    pub companion: String,
    pub master_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rates: vec![0.02, 0.1],
            selectivities: vec![0.2, 0.5],
            trials: 200,
            train_len: 150,
            horizon: 7,
            gamma: 0.9,
            orders: (1, 0, 1),
            measure: "M1".to_string(),
            companion: "M2".to_string(),
            master_seed: 0xBE7C,
        }
    }
}

/// One report row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sampler: String,
    pub rate: f64,
    pub selectivity: f64,
    /// Mean per-trial aggregation RSTD over the window.
    pub rstd: f64,
    /// Standard deviation of the per-trial RSTD.
    pub rstd_sd: f64,
    /// Mean per-trial relative error.
    pub re: f64,
    /// Mean relative forecast error over the horizon.
    pub forecast_err: f64,
    /// Mean relative interval width over the horizon.
    pub interval_width: f64,
}

/// CSV report with the fixed header
/// `sampler,rate,selectivity,rstd,rstd_sd,re,forecast_err,interval_width`.
pub fn report_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("sampler,rate,selectivity,rstd,rstd_sd,re,forecast_err,interval_width\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.sampler, r.rate, r.selectivity, r.rstd, r.rstd_sd, r.re, r.forecast_err,
            r.interval_width
        )
        .unwrap();
    }
    out
}

enum TrialSampler {
    Gsw { delta: f64 },
    Uniform { p: f64 },
    Priority { tau: f64 },
}

impl TrialSampler {
    fn estimate(&self, rows: &SubsetRows, seed: u64) -> f64 {
        match self {
            TrialSampler::Gsw { delta } => gsw_trial_estimate(rows, *delta, seed),
            TrialSampler::Uniform { p } => uniform_trial_estimate(rows, *p, seed),
            TrialSampler::Priority { tau } => priority_trial_estimate(rows, *tau, seed),
        }
    }

    /// Closed-form estimator variance on a subset, used as the noise
    /// plug-in for fitting.
    fn variance(&self, rows: &SubsetRows) -> f64 {
        match self {
            TrialSampler::Gsw { delta } => kahan::sum(
                rows.values
                    .iter()
                    .zip(&rows.weights)
                    .map(|(&m, &w)| delta * m * m / w),
            ),
            TrialSampler::Uniform { p } => kahan::sum(
                rows.values.iter().map(|&m| m * m * (1.0 - p) / p),
            ),
            TrialSampler::Priority { tau } => kahan::sum(
                rows.values
                    .iter()
                    .filter(|&&m| m < *tau)
                    .map(|&m| (tau - m) * m),
            ),
        }
    }
}

/// Runs the comparison on `table`, whose timestamp domain supplies
/// `train_len` training points and `horizon` future truths.
pub fn bench_samplers(
    table: &TimeSeriesTable,
    samplers: &[BenchSampler],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>, EngineError> {
    let domain = table.timestamp_domain();
    assert!(
        domain.len() >= cfg.train_len + cfg.horizon,
        "domain has {} timestamps, need {}",
        domain.len(),
        cfg.train_len + cfg.horizon
    );
    let train_ts = &domain[..cfg.train_len];
    let future_ts = &domain[cfg.train_len..cfg.train_len + cfg.horizon];

    let n_total = table.len() as f64;
    let target_measure = table.measure(&cfg.measure)?.to_vec();
    let opt_weights = target_measure.clone();
    let m1 = table.measure_vector(&cfg.measure)?;
    let m2 = table.measure_vector(&cfg.companion)?;
    let geo_weights = mean_weights(&[&m1, &m2], MeanKind::Geometric)?;
    let arith_weights = mean_weights(&[&m1, &m2], MeanKind::Arithmetic)?;

    let mut report = Vec::new();
    for &sampler in samplers {
        let weights: Option<&[f64]> = match sampler {
            BenchSampler::OptimalGsw => Some(&opt_weights),
            BenchSampler::GeoCompressedGsw => Some(&geo_weights),
            BenchSampler::ArithCompressedGsw => Some(&arith_weights),
            BenchSampler::Uniform | BenchSampler::Priority => None,
        };
        for &rate in &cfg.rates {
            let trial_sampler = match sampler {
                BenchSampler::Uniform => TrialSampler::Uniform { p: rate.min(1.0) },
                BenchSampler::Priority => {
                    if rate >= 1.0 {
                        // Everything retained deterministically.
                        let min_m =
                            target_measure.iter().copied().fold(f64::INFINITY, f64::min);
                        TrialSampler::Priority { tau: min_m * 0.5 }
                    } else {
                        TrialSampler::Priority {
                            tau: tau_for_expected_size(&target_measure, rate * n_total),
                        }
                    }
                }
                _ => {
                    let w = weights.unwrap();
                    if rate >= 1.0 {
                        TrialSampler::Gsw { delta: 0.0 }
                    } else {
                        TrialSampler::Gsw {
                            delta: delta_for_expected_size(w, rate * n_total),
                        }
                    }
                }
            };
            for &sel in &cfg.selectivities {
                let constraint = Constraint::cmp(
                    "Bucket",
                    CmpOp::Lt,
                    Literal::Int((sel * 1000.0).round() as i64),
                );
                // Precompute matching rows, exact sums, and noise variance
                // per training timestamp, plus exact future truths.
                let mut train_rows = Vec::with_capacity(train_ts.len());
                let mut exact = Vec::with_capacity(train_ts.len());
                let mut noise = Vec::with_capacity(train_ts.len());
                for &ts in train_ts {
                    let rows =
                        subset_rows(table, &constraint, &cfg.measure, weights, Some(ts))?;
                    exact.push(rows.exact_sum());
                    noise.push(trial_sampler.variance(&rows));
                    train_rows.push(rows);
                }
                if exact.iter().any(|v| *v <= 0.0) {
                    return Err(aggcast_core::estimate::EstimateError::ZeroTrueSum.into());
                }
                let truths: Vec<f64> = future_ts
                    .iter()
                    .map(|&ts| {
                        subset_rows(table, &constraint, &cfg.measure, None, Some(ts))
                            .map(|r| r.exact_sum())
                    })
                    .collect::<Result<_, _>>()?;

                struct TrialOutcome {
                    rstd: f64,
                    re: f64,
                    forecast_err: f64,
                    width: f64,
                }
                let cell_seed = derive_seed(
                    cfg.master_seed,
                    (sampler.name().len() as u64) << 32
                        ^ ((rate * 1e6) as u64) << 10
                        ^ (sel * 1e6) as u64,
                );
                let outcomes: Vec<TrialOutcome> = (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|trial| {
                        let seed = derive_seed(cell_seed, trial);
                        let mut sq = 0.0;
                        let mut abs = 0.0;
                        let mut values = Vec::with_capacity(train_rows.len());
                        for (rows, &truth) in train_rows.iter().zip(&exact) {
                            let est = trial_sampler.estimate(rows, seed);
                            let rel = (est - truth) / truth;
                            sq += rel * rel;
                            abs += rel.abs();
                            values.push(est);
                        }
                        let n_ts = train_rows.len() as f64;
                        let series = AggregateSeries::with_noise(values, noise.clone());
                        let (p, d, q) = cfg.orders;
                        let (forecast_err, width) = match fit_arima(&series, p, d, q)
                            .and_then(|model| forecast(&model, &series, cfg.horizon, cfg.gamma))
                        {
                            Ok(fc) => {
                                let mut err = 0.0;
                                let mut w = 0.0;
                                for (s, &truth) in truths.iter().enumerate() {
                                    err += (fc.points[s] - truth).abs() / truth;
                                    w += (fc.interval_hi[s] - fc.interval_lo[s]) / truth;
                                }
                                (err / truths.len() as f64, w / truths.len() as f64)
                            }
                            Err(_) => (f64::NAN, f64::NAN),
                        };
                        TrialOutcome {
                            rstd: (sq / n_ts).sqrt(),
                            re: abs / n_ts,
                            forecast_err,
                            width,
                        }
                    })
                    .collect();

                let n = outcomes.len() as f64;
                let mean_rstd = kahan::sum(outcomes.iter().map(|o| o.rstd)) / n;
                let var_rstd = kahan::sum(
                    outcomes
                        .iter()
                        .map(|o| (o.rstd - mean_rstd) * (o.rstd - mean_rstd)),
                ) / (n - 1.0).max(1.0);
                let finite = |f: fn(&TrialOutcome) -> f64| {
                    let vals: Vec<f64> =
                        outcomes.iter().map(f).filter(|v| v.is_finite()).collect();
                    if vals.is_empty() {
                        f64::NAN
                    } else {
                        kahan::sum(vals.iter().copied()) / vals.len() as f64
                    }
                };
                report.push(BenchRow {
                    sampler: sampler.name().to_string(),
                    rate,
                    selectivity: sel,
                    rstd: mean_rstd,
                    rstd_sd: var_rstd.sqrt(),
                    re: kahan::sum(outcomes.iter().map(|o| o.re)) / n,
                    forecast_err: finite(|o| o.forecast_err),
                    interval_width: finite(|o| o.width),
                });
            }
        }
    }
    Ok(report)
}
