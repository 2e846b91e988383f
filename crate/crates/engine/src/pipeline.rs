//! End-to-end task execution: rewrite, estimate, fit, forecast.
//!
//! The two online phases are timed separately (preparing training points by
//! aggregation, then model fitting), since aggregation is the scan-bound
//! part that sampling exists to shrink. Per-timestamp estimations run
//! concurrently over disjoint slices of an immutable sample; results are
//! collected in timestamp order so output is deterministic.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use aggcast_core::estimate::{
    estimate_count, estimate_sum, rstd_bound, sample_subset_consistency, Estimate, EstimateError,
};
use aggcast_core::forecast::{
    fit_arima, forecast, select_order, AggregateSeries, ArmaModel, ForecastError, ForecastResult,
};
use aggcast_core::kahan::KahanSum;
use aggcast_core::sample::{GswSample, MultiLayerSamples, SampleError};
use aggcast_core::table::{TableError, TimeSeriesTable};

use crate::store::{SampleStore, StoreError};
use crate::task::{rewrite_to_aggregations, Aggregate, ForecastTask, ModelSpec, TaskError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Group(#[from] aggcast_core::group::GroupError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("no covering sample for measure `{measure}`; available groups: {}",
            if available.is_empty() { "none".to_string() } else { available.join(", ") })]
    NoCoveringSample {
        measure: String,
        available: Vec<String>,
    },
    #[error("no timestamps in training window ({t_start}, {t_end})")]
    EmptyWindow { t_start: i64, t_end: i64 },
}

/// Where the training aggregates came from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceInfo {
    Exact,
    Layer {
        group: String,
        delta: f64,
        /// Set when no layer met the error target and the finest layer was
        /// used as a fallback.
        warning: bool,
    },
}

/// Wall-clock split of the two online phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingBreakdown {
    pub aggregation_ms: f64,
    pub fit_ms: f64,
    pub total_ms: f64,
}

/// Everything a task run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub task: ForecastTask,
    pub source: SourceInfo,
    pub timestamps: Vec<i64>,
    pub estimates: Vec<Estimate>,
    pub series: AggregateSeries,
    pub model: ArmaModel,
    pub forecast: ForecastResult,
    pub timing: TimingBreakdown,
}

/// Options for executing a task.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Answer aggregations exactly from the base table instead of samples.
    pub exact: bool,
}

/// Picks the largest-delta (smallest) layer whose predicted bound meets the
/// task's error target. The bound per layer uses the subset-scoped
/// consistency of the layer's matching rows and their per-timestamp count
/// as the expected matching sample size. Falls back to the finest layer,
/// with a warning flag, when no layer qualifies or no target is set.
pub fn select_layer<'a>(
    ml: &'a MultiLayerSamples,
    task: &ForecastTask,
    window_ts: &[i64],
) -> Result<(&'a GswSample, bool), EngineError> {
    let target = match task.error_target {
        None => return Ok((ml.finest(), false)),
        Some(t) => t,
    };
    let measure = task.agg.measure();
    // Coarsest (largest delta) first.
    for layer in ml.layers().iter().rev() {
        let mut matching = 0usize;
        for q_ts in window_ts {
            let c = &task.constraint;
            matching += layer
                .rows
                .iter()
                .filter(|r| r.ts == *q_ts && c.eval(&layer.row_view(r)).unwrap_or(false))
                .count();
        }
        if window_ts.is_empty() || matching == 0 {
            continue;
        }
        let per_ts = matching as f64 / window_ts.len() as f64;
        let theta = match measure {
            Some(m) => match sample_subset_consistency(layer, &task.constraint, m, None)? {
                Some(stats) => stats.theta,
                None => continue,
            },
            // COUNT estimates an all-ones measure; its consistency with the
            // weights is the weight spread over matching rows.
            None => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for r in &layer.rows {
                    if task.constraint.eval(&layer.row_view(r)).unwrap_or(false) {
                        lo = lo.min(1.0 / r.weight);
                        hi = hi.max(1.0 / r.weight);
                    }
                }
                hi / lo
            }
        };
        let bound = rstd_bound(theta.max(1.0), per_ts)?;
        if bound <= target {
            return Ok((layer, false));
        }
    }
    Ok((ml.finest(), true))
}

/// Plug-in estimate of the estimator variance for one `(constraint, ts)`
/// slice, computed from the sample itself: each sampled matching row
/// contributes its calibrated share of `sum(delta m^2 / w)`.
pub fn sigma_eps_plugin(
    sample: &GswSample,
    task: &ForecastTask,
    measure_idx: Option<usize>,
    ts: i64,
) -> f64 {
    let delta = sample.delta;
    if delta == 0.0 {
        return 0.0;
    }
    let mut acc = KahanSum::new();
    for row in &sample.rows {
        if row.ts == ts && task.constraint.eval(&sample.row_view(row)).unwrap_or(false) {
            let m = measure_idx.map_or(1.0, |i| row.measures[i]);
            let w = row.weight;
            acc.add(delta * m * m * (delta + w) / (w * w));
        }
    }
    acc.total()
}

struct PointEstimate {
    estimate: Estimate,
    value: f64,
    noise_var: f64,
}

fn estimate_point_from_sample(
    sample: &GswSample,
    task: &ForecastTask,
    ts: i64,
) -> Result<PointEstimate, EngineError> {
    match &task.agg {
        Aggregate::Sum(m) => {
            let est = estimate_sum(sample, &task.constraint, m, ts)?;
            let idx = sample.schema.measure_index(m)?;
            let noise = sigma_eps_plugin(sample, task, Some(idx), ts);
            Ok(PointEstimate {
                value: est.value,
                noise_var: noise,
                estimate: est,
            })
        }
        Aggregate::Count => {
            let est = estimate_count(sample, &task.constraint, ts)?;
            let noise = sigma_eps_plugin(sample, task, None, ts);
            Ok(PointEstimate {
                value: est.value,
                noise_var: noise,
                estimate: est,
            })
        }
        Aggregate::Avg(m) => {
            let sum = estimate_sum(sample, &task.constraint, m, ts)?;
            let count = estimate_count(sample, &task.constraint, ts)?;
            let idx = sample.schema.measure_index(m)?;
            let ratio = if count.value > 0.0 {
                sum.value / count.value
            } else {
                0.0
            };
            // Delta-method variance of the ratio of two calibrated sums
            // over the same inclusion draws (an approximation; the ratio
            // bias itself is left uncorrected).
            let var_s = sigma_eps_plugin(sample, task, Some(idx), ts);
            let var_c = sigma_eps_plugin(sample, task, None, ts);
            let mut cov = KahanSum::new();
            if sample.delta > 0.0 {
                for row in &sample.rows {
                    if row.ts == ts
                        && task.constraint.eval(&sample.row_view(row)).unwrap_or(false)
                    {
                        let w = row.weight;
                        cov.add(
                            sample.delta * row.measures[idx] * (sample.delta + w) / (w * w),
                        );
                    }
                }
            }
            let noise = if count.value > 0.0 {
                ((var_s + ratio * ratio * var_c - 2.0 * ratio * cov.total())
                    / (count.value * count.value))
                    .max(0.0)
            } else {
                0.0
            };
            Ok(PointEstimate {
                value: ratio,
                noise_var: noise,
                estimate: Estimate {
                    value: ratio,
                    sample_rows_used: sum.sample_rows_used,
                    bound: None,
                },
            })
        }
    }
}

fn estimate_point_exact(
    table: &TimeSeriesTable,
    task: &ForecastTask,
    ts: i64,
) -> Result<PointEstimate, EngineError> {
    let rows = table.exact_subset_count(&task.constraint, ts)?;
    let value = match &task.agg {
        Aggregate::Sum(m) => table.exact_subset_sum(&task.constraint, m, ts)?,
        Aggregate::Count => rows as f64,
        Aggregate::Avg(m) => {
            let s = table.exact_subset_sum(&task.constraint, m, ts)?;
            if rows > 0 {
                s / rows as f64
            } else {
                0.0
            }
        }
    };
    Ok(PointEstimate {
        value,
        noise_var: 0.0,
        estimate: Estimate {
            value,
            sample_rows_used: rows,
            bound: None,
        },
    })
}

/// Default order-selection grid for `MODEL='arima'`.
pub const AUTO_GRID: (usize, usize, usize) = (2, 1, 2);

/// Executes a parsed task against the store.
pub fn run_task(
    store: &SampleStore,
    task: &ForecastTask,
    opts: &RunOptions,
) -> Result<TaskResult, EngineError> {
    let total_start = Instant::now();

    // Resolve the data source and the timestamp domain.
    enum Source {
        Exact(Box<TimeSeriesTable>),
        Sampled { group: String, layer: GswSample, warning: bool },
    }
    let (source, domain) = if opts.exact {
        let table = store.load_table()?;
        task.validate(
            &table.dims().iter().map(|d| d.name.clone()).collect::<Vec<_>>(),
            &table.measure_names(),
        )?;
        let domain = table.timestamp_domain();
        (Source::Exact(Box::new(table)), domain)
    } else {
        let groups = store.list_groups()?;
        let covering: Vec<_> = groups
            .iter()
            .filter(|g| match task.agg.measure() {
                Some(m) => g.weight_source.covers(m),
                None => true,
            })
            .collect();
        let chosen = covering
            .iter()
            .find(|g| match (&g.weight_source, task.agg.measure()) {
                (aggcast_core::sample::WeightSource::Measure(m), Some(want)) => m == want,
                _ => false,
            })
            .or_else(|| covering.first())
            .ok_or_else(|| EngineError::NoCoveringSample {
                measure: task.agg.measure().unwrap_or("*").to_string(),
                available: groups.iter().map(|g| g.name.clone()).collect(),
            })?;
        let ml = store.load_group(&chosen.name)?;
        let window_ts: Vec<i64> = chosen
            .timestamps
            .iter()
            .copied()
            .filter(|t| *t >= task.t_start && *t <= task.t_end)
            .collect();
        let (layer, warning) = select_layer(&ml, task, &window_ts)?;
        {
            let dims: Vec<String> =
                layer.schema.dims.iter().map(|(n, _)| n.clone()).collect();
            task.validate(&dims, &layer.schema.measures)?;
        }
        let domain = chosen.timestamps.clone();
        (
            Source::Sampled {
                group: chosen.name.clone(),
                layer: layer.clone(),
                warning,
            },
            domain,
        )
    };

    let queries = rewrite_to_aggregations(task, &domain);
    if queries.is_empty() {
        return Err(EngineError::EmptyWindow {
            t_start: task.t_start,
            t_end: task.t_end,
        });
    }

    // Phase 1: aggregation.
    let agg_start = Instant::now();
    let points: Vec<PointEstimate> = match &source {
        Source::Exact(table) => queries
            .par_iter()
            .map(|q| estimate_point_exact(table, task, q.ts))
            .collect::<Result<_, _>>()?,
        Source::Sampled { layer, .. } => queries
            .par_iter()
            .map(|q| estimate_point_from_sample(layer, task, q.ts))
            .collect::<Result<_, _>>()?,
    };
    let aggregation_ms = agg_start.elapsed().as_secs_f64() * 1e3;

    let timestamps: Vec<i64> = queries.iter().map(|q| q.ts).collect();
    let estimates: Vec<Estimate> = points.iter().map(|p| p.estimate.clone()).collect();
    let series = AggregateSeries::with_noise(
        points.iter().map(|p| p.value).collect(),
        points.iter().map(|p| p.noise_var).collect(),
    );

    // Phase 2: model fitting and forecasting.
    let fit_start = Instant::now();
    let (p, d, q) = match task.model {
        ModelSpec::Arima { p, d, q } => (p, d, q),
        ModelSpec::AutoArima => {
            let (pm, dm, qm) = AUTO_GRID;
            select_order(&series, pm, dm, qm)?
        }
    };
    let model = fit_arima(&series, p, d, q)?;
    let fc = forecast(&model, &series, task.horizon, task.gamma)?;
    let fit_ms = fit_start.elapsed().as_secs_f64() * 1e3;

    let source_info = match source {
        Source::Exact(_) => SourceInfo::Exact,
        Source::Sampled { group, layer, warning } => SourceInfo::Layer {
            group,
            delta: layer.delta,
            warning,
        },
    };

    Ok(TaskResult {
        task: task.clone(),
        source: source_info,
        timestamps,
        estimates,
        series,
        model,
        forecast: fc,
        timing: TimingBreakdown {
            aggregation_ms,
            fit_ms,
            total_ms: total_start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

impl TaskResult {
    /// Deterministic key=value block: everything except wall-clock timing,
    /// which inherently varies between runs.
    pub fn canonical_block(&self) -> String {
        let mut out = String::new();
        writeln!(out, "task={}", self.task).unwrap();
        match &self.source {
            SourceInfo::Exact => writeln!(out, "source=exact").unwrap(),
            SourceInfo::Layer {
                group,
                delta,
                warning,
            } => {
                writeln!(out, "source=sample group={group} delta={delta} warning={warning}")
                    .unwrap()
            }
        }
        writeln!(out, "points={}", self.timestamps.len()).unwrap();
        for ((ts, est), noise) in self
            .timestamps
            .iter()
            .zip(&self.estimates)
            .zip(&self.series.noise_var)
        {
            writeln!(
                out,
                "estimate.{ts}={} rows_used={} noise_var={}",
                est.value, est.sample_rows_used, noise
            )
            .unwrap();
        }
        writeln!(
            out,
            "model.orders=({},{},{})",
            self.model.p, self.model.d, self.model.q
        )
        .unwrap();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "model.alpha={}", join(&self.model.alpha)).unwrap();
        writeln!(out, "model.beta={}", join(&self.model.beta)).unwrap();
        writeln!(out, "model.mean={}", self.model.mean).unwrap();
        writeln!(out, "model.sigma_u2={}", self.model.sigma_u2).unwrap();
        writeln!(out, "model.sigma_eps2={}", self.model.sigma_eps2).unwrap();
        writeln!(out, "forecast.gamma={}", self.forecast.gamma).unwrap();
        for (i, ((point, lo), hi)) in self
            .forecast
            .points
            .iter()
            .zip(&self.forecast.interval_lo)
            .zip(&self.forecast.interval_hi)
            .enumerate()
        {
            writeln!(out, "forecast.{}.point={point}", i + 1).unwrap();
            writeln!(out, "forecast.{}.lo={lo}", i + 1).unwrap();
            writeln!(out, "forecast.{}.hi={hi}", i + 1).unwrap();
        }
        out
    }

    /// Timing lines, kept out of the canonical block.
    pub fn timing_block(&self) -> String {
        format!(
            "timing.aggregation_ms={}\ntiming.fit_ms={}\ntiming.total_ms={}\n",
            self.timing.aggregation_ms, self.timing.fit_ms, self.timing.total_ms
        )
    }

    /// Plot-data CSV: one row per training point (indexed 0..n-1) and one
    /// per forecast step; `actual` is filled when the exact series is known.
    pub fn plot_csv(&self, actual: Option<&[f64]>) -> String {
        let mut out = String::from("idx,ts,actual,estimate,forecast,lo,hi\n");
        for (i, (ts, est)) in self.timestamps.iter().zip(&self.estimates).enumerate() {
            let actual_field = match (&self.source, actual) {
                (_, Some(a)) => a[i].to_string(),
                (SourceInfo::Exact, None) => est.value.to_string(),
                _ => String::new(),
            };
            writeln!(out, "{i},{ts},{actual_field},{},,,", est.value).unwrap();
        }
        let n = self.timestamps.len();
        for (s, ((point, lo), hi)) in self
            .forecast
            .points
            .iter()
            .zip(&self.forecast.interval_lo)
            .zip(&self.forecast.interval_hi)
            .enumerate()
        {
            writeln!(out, "{},,,,{point},{lo},{hi}", n + s).unwrap();
        }
        out
    }
}
