//! Synthetic workloads for the benchmark harness and tests.
//!
//! Tables carry a `Bucket` dimension uniform over 0..999, so the constraint
//! `Bucket < k` has selectivity k/1000 while staying independent of the
//! measures. Measures are heavy-tailed (Pareto) with an optional correlated
//! companion, matching the regime weighted sampling is built for.

use aggcast_core::forecast::simulate_arma;
use aggcast_core::rng::{hash64, unit_uniform};
use aggcast_core::table::{DimColumn, DimData, MeasureColumn, TimeSeriesTable};

/// Pareto(alpha) draw with unit scale from one uniform.
pub fn pareto(u: f64, alpha: f64) -> f64 {
    u.powf(-1.0 / alpha)
}

/// Heavy-tailed table spec.
#[derive(Debug, Clone)]
pub struct HeavyTailedSpec {
    pub rows: usize,
    /// Distinct timestamps, assigned round-robin.
    pub timestamps: Vec<i64>,
    pub pareto_alpha: f64,
    /// Row-wise ratio spread of the correlated companion measure `M2`
    /// relative to `M1` (its realized trend deviation approaches this).
    pub correlated_ratio: f64,
    pub seed: u64,
}

impl Default for HeavyTailedSpec {
    fn default() -> Self {
        Self {
            rows: 100_000,
            timestamps: (0..10).collect(),
            pareto_alpha: 1.5,
            correlated_ratio: 4.0,
            seed: 0xBEEF,
        }
    }
}

/// Builds a table with measures `M1` (Pareto), `M2` (M1 times a bounded
/// ratio: correlated) and `M3` (independent Pareto).
pub fn heavy_tailed_table(spec: &HeavyTailedSpec) -> TimeSeriesTable {
    let n = spec.rows;
    let mut bucket = Vec::with_capacity(n);
    let mut m1 = Vec::with_capacity(n);
    let mut m2 = Vec::with_capacity(n);
    let mut m3 = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    let n_ts = spec.timestamps.len();
    for i in 0..n as u64 {
        bucket.push((hash64(spec.seed ^ 0x01, i) % 1000) as i64);
        let base = pareto(unit_uniform(spec.seed ^ 0x02, i), spec.pareto_alpha);
        m1.push(base);
        let ratio = 1.0 + (spec.correlated_ratio - 1.0) * unit_uniform(spec.seed ^ 0x03, i);
        m2.push(base * ratio);
        m3.push(pareto(unit_uniform(spec.seed ^ 0x04, i), spec.pareto_alpha));
        ts.push(spec.timestamps[(i as usize) % n_ts]);
    }
    TimeSeriesTable::from_columns(
        vec![DimColumn {
            name: "Bucket".into(),
            data: DimData::Int(bucket),
        }],
        vec![
            MeasureColumn {
                name: "M1".into(),
                values: m1,
            },
            MeasureColumn {
                name: "M2".into(),
                values: m2,
            },
            MeasureColumn {
                name: "M3".into(),
                values: m3,
            },
        ],
        ts,
    )
    .expect("synthetic measures are positive")
}

/// Spec for a table whose per-timestamp totals follow an ARMA(1,1) process.
#[derive(Debug, Clone)]
pub struct ArmaTableSpec {
    pub rows_per_ts: usize,
    /// Training timestamps plus the future ones used as ground truth.
    pub n_timestamps: usize,
    pub alpha1: f64,
    pub beta1: f64,
    pub sigma_u: f64,
    /// Mean level of the per-timestamp total.
    pub mean_level: f64,
    pub pareto_alpha: f64,
    pub seed: u64,
}

/// Builds a table whose exact per-timestamp `SUM(M)` equals the simulated
/// ARMA series (timestamps are 0..n_timestamps). Individual rows are scaled
/// Pareto draws.
pub fn arma_driven_table(spec: &ArmaTableSpec) -> (TimeSeriesTable, Vec<f64>) {
    let series = simulate_arma(
        &[spec.alpha1],
        &[spec.beta1],
        spec.sigma_u,
        spec.mean_level,
        spec.n_timestamps,
        spec.seed,
    );
    assert!(
        series.iter().all(|v| *v > 0.0),
        "mean level too small: simulated totals cross zero"
    );
    let n = spec.rows_per_ts * spec.n_timestamps;
    let mut bucket = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for (t, total) in series.iter().enumerate() {
        let raw: Vec<f64> = (0..spec.rows_per_ts)
            .map(|i| {
                pareto(
                    unit_uniform(spec.seed ^ 0x10, (t * spec.rows_per_ts + i) as u64),
                    spec.pareto_alpha,
                )
            })
            .collect();
        let scale = total / raw.iter().sum::<f64>();
        for (i, r) in raw.iter().enumerate() {
            bucket.push((hash64(spec.seed ^ 0x11, (t * spec.rows_per_ts + i) as u64) % 1000) as i64);
            m.push(r * scale);
            ts.push(t as i64);
        }
    }
    let table = TimeSeriesTable::from_columns(
        vec![DimColumn {
            name: "Bucket".into(),
            data: DimData::Int(bucket),
        }],
        vec![MeasureColumn {
            name: "M".into(),
            values: m,
        }],
        ts,
    )
    .expect("synthetic measures are positive");
    (table, series)
}
