//! Calibrated subset-sum estimation from GSW samples.
//!
//! A sampled row with weight `w` contributes its calibrated measure
//! `m * (delta + w) / w`; unsampled rows contribute zero. The resulting
//! estimator is unbiased for any weights, and its relative standard
//! deviation is bounded by `sqrt(theta / E|S|)` where `theta` is the
//! consistency scale between weights and measure.

pub mod monte_carlo;

use std::fmt;

use thiserror::Error;

use crate::group::{deviation_stats, GroupError, MeanKind};
use crate::kahan::KahanSum;
use crate::sample::{GswSample, SampleError};
use crate::table::{Constraint, ConstraintError, MeasureVector};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("values must be strictly positive")]
    NonPositiveValue,
    #[error("delta must be non-negative, got {0}")]
    NonPositiveDelta(f64),
    #[error("consistency scale must be >= 1, got {0}")]
    InvalidTheta(f64),
    #[error("expected sample size must be positive, got {0}")]
    InvalidExpectedSize(f64),
    #[error("Monte Carlo needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("true subset sum is zero; relative error is undefined")]
    ZeroTrueSum,
}

/// An estimated subset sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// The calibrated estimate.
    pub value: f64,
    /// Sampled rows that matched the constraint and timestamp. Zero rows
    /// with a zero value signals empty-match degeneracy, not an error.
    pub sample_rows_used: usize,
    /// Optional RSTD upper bound attached by the caller.
    pub bound: Option<f64>,
}

/// Consistency of sampling weights with a measure:
/// `theta_lo = min m_i/w_i`, `theta_hi = max m_i/w_i`,
/// `theta = theta_hi / theta_lo >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyStats {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub theta: f64,
}

/// Estimates `SUM(measure)` over sampled rows matching `(c, ts)`.
pub fn estimate_sum(
    sample: &GswSample,
    c: &Constraint,
    measure: &str,
    ts: i64,
) -> Result<Estimate, EstimateError> {
    let midx = sample.schema.measure_index(measure)?;
    let mut acc = KahanSum::new();
    let mut used = 0usize;
    for row in &sample.rows {
        if row.ts == ts && c.eval(&sample.row_view(row))? {
            let m = row.measures[midx];
            acc.add(m + m * sample.delta / row.weight);
            used += 1;
        }
    }
    Ok(Estimate {
        value: acc.total(),
        sample_rows_used: used,
        bound: None,
    })
}

/// Estimates `COUNT(*)` over rows matching `(c, ts)`: the calibrated sum of
/// an implicit all-ones measure.
pub fn estimate_count(
    sample: &GswSample,
    c: &Constraint,
    ts: i64,
) -> Result<Estimate, EstimateError> {
    let mut acc = KahanSum::new();
    let mut used = 0usize;
    for row in &sample.rows {
        if row.ts == ts && c.eval(&sample.row_view(row))? {
            acc.add(1.0 + sample.delta / row.weight);
            used += 1;
        }
    }
    Ok(Estimate {
        value: acc.total(),
        sample_rows_used: used,
        bound: None,
    })
}

/// Exact consistency statistics of a (measure, weights) pair.
pub fn consistency(m: &[f64], w: &[f64]) -> Result<ConsistencyStats, EstimateError> {
    if m.len() != w.len() {
        return Err(EstimateError::LengthMismatch(m.len(), w.len()));
    }
    if m.is_empty() {
        return Err(EstimateError::LengthMismatch(0, 0));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&mi, &wi) in m.iter().zip(w) {
        if !(mi > 0.0) || !(wi > 0.0) {
            return Err(EstimateError::NonPositiveValue);
        }
        let r = mi / wi;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(ConsistencyStats {
        theta_lo: lo,
        theta_hi: hi,
        theta: hi / lo,
    })
}

/// Consistency of weights with a measure over the sampled rows matching
/// `(c, ts)`; `None` when no row matches. This is the subset-scoped theta
/// used for per-query bounds.
pub fn sample_subset_consistency(
    sample: &GswSample,
    c: &Constraint,
    measure: &str,
    ts: Option<i64>,
) -> Result<Option<ConsistencyStats>, EstimateError> {
    let midx = sample.schema.measure_index(measure)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for row in &sample.rows {
        if ts.map_or(true, |t| row.ts == t) && c.eval(&sample.row_view(row))? {
            let r = row.measures[midx] / row.weight;
            lo = lo.min(r);
            hi = hi.max(r);
            any = true;
        }
    }
    Ok(any.then(|| ConsistencyStats {
        theta_lo: lo,
        theta_hi: hi,
        theta: hi / lo,
    }))
}

/// Expected sample size `sum_i w_i / (delta + w_i)`. `delta = 0` returns the
/// row count.
pub fn expected_sample_size(w: &[f64], delta: f64) -> Result<f64, EstimateError> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(EstimateError::NonPositiveDelta(delta));
    }
    let mut acc = KahanSum::new();
    for &wi in w {
        if !(wi > 0.0) {
            return Err(EstimateError::NonPositiveValue);
        }
        acc.add(wi / (delta + wi));
    }
    Ok(acc.total())
}

/// Closed-form estimator variance `sum_i delta * m_i^2 / w_i` over the rows
/// provided (typically a constrained subset).
pub fn estimator_variance(m: &[f64], w: &[f64], delta: f64) -> Result<f64, EstimateError> {
    if m.len() != w.len() {
        return Err(EstimateError::LengthMismatch(m.len(), w.len()));
    }
    let mut acc = KahanSum::new();
    for (&mi, &wi) in m.iter().zip(w) {
        acc.add(delta * mi * mi / wi);
    }
    Ok(acc.total())
}

/// RSTD upper bound `sqrt(theta / E|S|)`. With `theta = 1` this is the
/// optimal-sampler bound `sqrt(1 / E|S|)`.
pub fn rstd_bound(theta: f64, expected_size: f64) -> Result<f64, EstimateError> {
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(EstimateError::InvalidTheta(theta));
    }
    if !(expected_size > 0.0) {
        return Err(EstimateError::InvalidExpectedSize(expected_size));
    }
    Ok((theta / expected_size).sqrt())
}

/// RSTD bounds for a compressed sample shared by a group of measures.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBounds {
    pub kind: MeanKind,
    /// One bound per measure, in input order.
    pub per_measure: Vec<f64>,
    /// The looser uniform bound covering every measure in the group.
    pub uniform: f64,
}

/// Per-measure and uniform RSTD bounds when a group of `k` measures shares
/// one sample with `kind`-mean weights.
///
/// Geometric: measure `p` is bounded by
/// `sqrt(prod_{j != p} rho_{p,j}^{1/k} / E|S|)`, uniformly by
/// `sqrt(rho^{(k-1)/k} / E|S|)`. Arithmetic: `sqrt(delta_range^2 / E|S|)`.
pub fn compressed_bounds(
    measures: &[&MeasureVector],
    kind: MeanKind,
    expected_size: f64,
) -> Result<CompressedBounds, EstimateError> {
    if measures.is_empty() {
        return Err(EstimateError::Group(GroupError::EmptyGroup));
    }
    if !(expected_size > 0.0) {
        return Err(EstimateError::InvalidExpectedSize(expected_size));
    }
    let k = measures.len();
    if k == 1 {
        let b = (1.0 / expected_size).sqrt();
        return Ok(CompressedBounds {
            kind,
            per_measure: vec![b],
            uniform: b,
        });
    }
    let stats = deviation_stats(measures)?;
    match kind {
        MeanKind::Geometric => {
            let per_measure = (0..k)
                .map(|p| {
                    let mut theta = 1.0;
                    for j in 0..k {
                        if j != p {
                            theta *= stats.rho[p][j].powf(1.0 / k as f64);
                        }
                    }
                    (theta / expected_size).sqrt()
                })
                .collect();
            let uniform =
                (stats.rho_max.powf((k - 1) as f64 / k as f64) / expected_size).sqrt();
            Ok(CompressedBounds {
                kind,
                per_measure,
                uniform,
            })
        }
        MeanKind::Arithmetic => {
            let b = (stats.delta_range * stats.delta_range / expected_size).sqrt();
            Ok(CompressedBounds {
                kind,
                per_measure: vec![b; k],
                uniform: b,
            })
        }
    }
}

/// The variance-minimizing sampling weights for one measure: the measure
/// itself (the scale constant folds into the choice of delta).
pub fn optimal_weights(m: &MeasureVector) -> Vec<f64> {
    m.values.clone()
}

/// Flat key=value report for one estimate, for CLI consumption.
pub struct EstimateReport {
    pub value: f64,
    pub rows_used: usize,
    pub theta: Option<f64>,
    pub bound: Option<f64>,
    pub delta: f64,
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "value={}", self.value)?;
        writeln!(f, "rows_used={}", self.rows_used)?;
        match self.theta {
            Some(t) => writeln!(f, "theta={t}")?,
            None => writeln!(f, "theta=na")?,
        }
        match self.bound {
            Some(b) => writeln!(f, "bound={b}")?,
            None => writeln!(f, "bound=na")?,
        }
        write!(f, "delta={}", self.delta)
    }
}
