//! Priority/threshold sampling baseline.
//!
//! Each row draws `alpha_i` uniform in (0,1) and gets priority
//! `m_i / alpha_i`. Against a threshold `tau` the retained variable is
//!
//! - `0`    if `m_i / alpha_i < tau`
//! - `tau`  if `m_i < tau <= m_i / alpha_i`
//! - `m_i`  if `tau <= m_i`
//!
//! and the subset-sum estimator is the sum of retained variables. In top-k
//! mode `tau` is the k-th highest priority.

use super::{SampleError, SampleSchema};
use crate::rng::unit_uniform;
use crate::table::{DimLookup, DimRef, DimValue, TimeSeriesTable};

/// Threshold selection mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorityMode {
    /// Fixed threshold.
    FixedTau(f64),
    /// Threshold is the k-th highest priority over all rows.
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityRow {
    pub row_id: u64,
    /// Retained variable: either `tau` or the row's own measure.
    pub x: f64,
    /// The measure value the priority was computed from.
    pub measure: f64,
    pub dims: Vec<DimValue>,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritySample {
    pub tau: f64,
    pub seed: u64,
    pub measure_name: String,
    pub schema: SampleSchema,
    pub rows: Vec<PriorityRow>,
}

impl PrioritySample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Unbiased estimate of the full sum: sum of retained variables.
    pub fn estimate_total(&self) -> f64 {
        crate::kahan::sum(self.rows.iter().map(|r| r.x))
    }

    pub fn row_view<'a>(&'a self, row: &'a PriorityRow) -> PriorityRowView<'a> {
        PriorityRowView {
            schema: &self.schema,
            row,
        }
    }
}

/// View of a priority row for constraint evaluation.
pub struct PriorityRowView<'a> {
    schema: &'a SampleSchema,
    row: &'a PriorityRow,
}

impl DimLookup for PriorityRowView<'_> {
    fn dim(&self, name: &str) -> Option<DimRef<'_>> {
        self.schema
            .dims
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| self.row.dims[i].as_ref())
    }
}

/// Computes the retained variable for one row given its uniform draw.
#[inline]
fn retained(m: f64, alpha: f64, tau: f64) -> f64 {
    if tau <= m {
        m
    } else if m / alpha >= tau {
        tau
    } else {
        0.0
    }
}

/// Draws a priority sample of `measure` from the table.
pub fn priority_draw(
    table: &TimeSeriesTable,
    measure: &str,
    mode: PriorityMode,
    seed: u64,
) -> Result<PrioritySample, SampleError> {
    let values = table
        .measure(measure)
        .map_err(|_| SampleError::UnknownMeasure(measure.to_string()))?;
    let n = values.len();

    let tau = match mode {
        PriorityMode::FixedTau(tau) => {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(SampleError::NonPositiveTau(tau));
            }
            tau
        }
        PriorityMode::TopK(k) => {
            if k < 1 || k > n {
                return Err(SampleError::InvalidK { k, n });
            }
            // Single pass over priorities plus an O(n) selection.
            let mut priorities: Vec<f64> = (0..n)
                .map(|i| values[i] / unit_uniform(seed, i as u64))
                .collect();
            let idx = k - 1;
            priorities
                .select_nth_unstable_by(idx, |a, b| b.partial_cmp(a).unwrap());
            priorities[idx]
        }
    };

    let schema = SampleSchema::of_table(table);
    let mut rows = Vec::new();
    for i in 0..n {
        let alpha = unit_uniform(seed, i as u64);
        let x = retained(values[i], alpha, tau);
        if x > 0.0 {
            rows.push(PriorityRow {
                row_id: i as u64,
                x,
                measure: values[i],
                dims: table.dims().iter().map(|c| c.data.get_owned(i)).collect(),
                ts: table.timestamps()[i],
            });
        }
    }
    Ok(PrioritySample {
        tau,
        seed,
        measure_name: measure.to_string(),
        schema,
        rows,
    })
}

/// Expands a priority sample into a measure-biased multiset of row ids:
/// one copy when the retained variable is `tau`, `ceil(m_i / tau)` copies
/// when it is the row's own measure.
pub fn measure_biased_from_priority(sample: &PrioritySample) -> Vec<u64> {
    let mut out = Vec::new();
    for row in &sample.rows {
        let copies = if row.x == row.measure && row.measure >= sample.tau {
            (row.measure / sample.tau).ceil() as u64
        } else {
            1
        };
        for _ in 0..copies {
            out.push(row.row_id);
        }
    }
    out
}
