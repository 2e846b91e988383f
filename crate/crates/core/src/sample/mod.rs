//! Smoothed weighted (GSW) sampling.
//!
//! A GSW sample is parameterized by a positive smoothing constant `delta`
//! and per-row positive weights `w`: row `i` is included independently with
//! probability `w_i / (delta + w_i)`. Each row's uniform draw `u_i` is a pure
//! function of `(seed, row_id)`, so disjoint partitions can be sampled
//! independently and merged, and samples at different `delta` values nest.
//!
//! Rows are kept sorted by the retention key `(1/u - 1) * w`; a row is in
//! the sample iff its key is at least `delta` (the interval is closed at
//! `delta`, both when drawing and when updating). Growing `delta` therefore
//! only deletes a sorted prefix, which is what makes incremental maintenance
//! cheap.

mod io;
mod priority;
mod uniform;

pub use io::{read_sample, write_sample};
pub use priority::{
    measure_biased_from_priority, priority_draw, PriorityMode, PriorityRow, PrioritySample,
};
pub use uniform::{uniform_draw, UniformSample};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::rng::unit_uniform;
use crate::table::{DimData, DimLookup, DimRef, DimValue, TimeSeriesTable};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("delta must be non-negative, got {0}")]
    NonPositiveDelta(f64),
    #[error("weight at row {0} is not strictly positive")]
    NonPositiveWeight(usize),
    #[error("weight vector length {weights} does not match table length {rows}")]
    WeightLengthMismatch { weights: usize, rows: usize },
    #[error("delta may not decrease in an update: {from} -> {to}")]
    DeltaDecrease { from: f64, to: f64 },
    #[error("duplicate row id {0} in update")]
    DuplicateRowId(u64),
    #[error("tau must be strictly positive, got {0}")]
    NonPositiveTau(f64),
    #[error("top-k mode requires 1 <= k <= n, got k={k}, n={n}")]
    InvalidK { k: usize, n: usize },
    #[error("inclusion probability must be in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("deltas must be strictly increasing and positive")]
    UnsortedDeltas,
    #[error("unknown measure `{0}` in sample")]
    UnknownMeasure(String),
    #[error("malformed sample file: {0}")]
    MalformedFile(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the sampling weights of a sample were built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    /// One measure's own values (the optimal sampler for that measure).
    Measure(String),
    /// Geometric mean of a group of measures.
    GeoMean(Vec<String>),
    /// Arithmetic mean of a group of measures.
    ArithMean(Vec<String>),
}

impl WeightSource {
    /// Measures this weight source is intended to serve.
    pub fn measures(&self) -> &[String] {
        match self {
            WeightSource::Measure(m) => std::slice::from_ref(m),
            WeightSource::GeoMean(ms) | WeightSource::ArithMean(ms) => ms,
        }
    }

    pub fn covers(&self, measure: &str) -> bool {
        self.measures().iter().any(|m| m == measure)
    }
}

impl fmt::Display for WeightSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSource::Measure(m) => write!(f, "measure:{m}"),
            WeightSource::GeoMean(ms) => write!(f, "geo:{}", ms.join(",")),
            WeightSource::ArithMean(ms) => write!(f, "arith:{}", ms.join(",")),
        }
    }
}

impl FromStr for WeightSource {
    type Err = SampleError;

    fn from_str(s: &str) -> Result<Self, SampleError> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| SampleError::MalformedFile(format!("bad weight source `{s}`")))?;
        let names = || rest.split(',').map(|m| m.trim().to_string()).collect();
        match kind {
            "measure" => Ok(WeightSource::Measure(rest.trim().to_string())),
            "geo" => Ok(WeightSource::GeoMean(names())),
            "arith" => Ok(WeightSource::ArithMean(names())),
            _ => Err(SampleError::MalformedFile(format!(
                "bad weight source kind `{kind}`"
            ))),
        }
    }
}

/// Type of a dimension column carried by a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind {
    Int,
    Str,
}

/// Column names and types carried by a sample, making sample files
/// self-describing: queries never need the base table.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSchema {
    pub dims: Vec<(String, DimKind)>,
    pub measures: Vec<String>,
}

impl SampleSchema {
    pub fn of_table(table: &TimeSeriesTable) -> Self {
        Self {
            dims: table
                .dims()
                .iter()
                .map(|c| {
                    let kind = match c.data {
                        DimData::Int(_) => DimKind::Int,
                        DimData::Str(_) => DimKind::Str,
                    };
                    (c.name.clone(), kind)
                })
                .collect(),
            measures: table.measures().iter().map(|c| c.name.clone()).collect(),
        }
    }

    pub fn measure_index(&self, name: &str) -> Result<usize, SampleError> {
        self.measures
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| SampleError::UnknownMeasure(name.to_string()))
    }
}

/// One sampled row with its retained randomness and full payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub row_id: u64,
    /// The uniform draw that decided inclusion; retained so the sample can
    /// be updated without re-randomizing.
    pub u: f64,
    /// Sampling weight of the row.
    pub weight: f64,
    pub dims: Vec<DimValue>,
    pub measures: Vec<f64>,
    pub ts: i64,
}

impl SampleRow {
    /// Retention key `(1/u - 1) * w`; the row belongs to every sample with
    /// `delta <= key`.
    #[inline]
    pub fn key(&self) -> f64 {
        gsw_key(self.u, self.weight)
    }
}

/// Retention key for a `(u, weight)` pair.
#[inline]
pub fn gsw_key(u: f64, weight: f64) -> f64 {
    (1.0 / u - 1.0) * weight
}

/// View of a sample row for constraint evaluation.
pub struct SampleRowView<'a> {
    schema: &'a SampleSchema,
    row: &'a SampleRow,
}

impl DimLookup for SampleRowView<'_> {
    fn dim(&self, name: &str) -> Option<DimRef<'_>> {
        self.schema
            .dims
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| self.row.dims[i].as_ref())
    }
}

/// A GSW sample: rows sorted ascending by retention key.
#[derive(Debug, Clone, PartialEq)]
pub struct GswSample {
    pub delta: f64,
    pub seed: u64,
    pub weight_source: WeightSource,
    pub schema: SampleSchema,
    pub rows: Vec<SampleRow>,
}

impl GswSample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_view<'a>(&'a self, row: &'a SampleRow) -> SampleRowView<'a> {
        SampleRowView {
            schema: &self.schema,
            row,
        }
    }

    /// Sorted distinct timestamps present among sampled rows.
    pub fn timestamp_domain(&self) -> Vec<i64> {
        let mut ts: Vec<i64> = self.rows.iter().map(|r| r.ts).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

fn validate_weights(weights: &[f64], rows: usize) -> Result<(), SampleError> {
    if weights.len() != rows {
        return Err(SampleError::WeightLengthMismatch {
            weights: weights.len(),
            rows,
        });
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(SampleError::NonPositiveWeight(i));
        }
    }
    Ok(())
}

fn sort_rows(rows: &mut [SampleRow]) {
    rows.sort_unstable_by(|a, b| {
        a.key()
            .partial_cmp(&b.key())
            .unwrap()
            .then(a.row_id.cmp(&b.row_id))
    });
}

/// Draws a GSW sample from a table.
///
/// `delta = 0` is accepted and includes every row (inclusion probability 1);
/// keys stay finite because `u` is clamped away from zero.
pub fn gsw_draw(
    table: &TimeSeriesTable,
    weights: &[f64],
    source: WeightSource,
    delta: f64,
    seed: u64,
) -> Result<GswSample, SampleError> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(SampleError::NonPositiveDelta(delta));
    }
    validate_weights(weights, table.len())?;

    let schema = SampleSchema::of_table(table);
    let mut rows = Vec::new();
    for i in 0..table.len() {
        let u = unit_uniform(seed, i as u64);
        let w = weights[i];
        if gsw_key(u, w) >= delta {
            rows.push(SampleRow {
                row_id: i as u64,
                u,
                weight: w,
                dims: table.dims().iter().map(|c| c.data.get_owned(i)).collect(),
                measures: table.measures().iter().map(|c| c.values[i]).collect(),
                ts: table.timestamps()[i],
            });
        }
    }
    sort_rows(&mut rows);
    Ok(GswSample {
        delta,
        seed,
        weight_source: source,
        schema,
        rows,
    })
}

/// A not-yet-sampled row offered to [`gsw_update`]. Its uniform draw is
/// derived from the sample's seed and the row id.
#[derive(Debug, Clone)]
pub struct NewRow {
    pub row_id: u64,
    pub weight: f64,
    pub dims: Vec<DimValue>,
    pub measures: Vec<f64>,
    pub ts: i64,
}

/// Grows `delta` and merges newly arrived rows, touching only stored rows.
///
/// The result has exactly the row set and `u` values of a fresh
/// [`gsw_draw`] over all rows at `delta_new` with the same seed.
pub fn gsw_update(
    sample: &GswSample,
    delta_new: f64,
    new_rows: &[NewRow],
) -> Result<GswSample, SampleError> {
    if !(delta_new >= sample.delta) {
        return Err(SampleError::DeltaDecrease {
            from: sample.delta,
            to: delta_new,
        });
    }
    let mut seen: std::collections::HashSet<u64> =
        sample.rows.iter().map(|r| r.row_id).collect();
    for nr in new_rows {
        if !(nr.weight > 0.0) || !nr.weight.is_finite() {
            return Err(SampleError::NonPositiveWeight(nr.row_id as usize));
        }
        if !seen.insert(nr.row_id) {
            return Err(SampleError::DuplicateRowId(nr.row_id));
        }
    }

    // Stored rows all have key >= delta; deleting keys in [delta, delta_new)
    // means retaining the suffix with key >= delta_new.
    let cut = sample
        .rows
        .partition_point(|r| r.key() < delta_new);
    let mut rows: Vec<SampleRow> = sample.rows[cut..].to_vec();

    for nr in new_rows {
        let u = unit_uniform(sample.seed, nr.row_id);
        if gsw_key(u, nr.weight) >= delta_new {
            rows.push(SampleRow {
                row_id: nr.row_id,
                u,
                weight: nr.weight,
                dims: nr.dims.clone(),
                measures: nr.measures.clone(),
                ts: nr.ts,
            });
        }
    }
    sort_rows(&mut rows);

    Ok(GswSample {
        delta: delta_new,
        seed: sample.seed,
        weight_source: sample.weight_source.clone(),
        schema: sample.schema.clone(),
        rows,
    })
}

/// Nested GSW samples at strictly increasing `delta` values sharing one seed
/// and one weight source. Smaller-`delta` layers are supersets of larger
/// ones because every layer sees the same `u` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerSamples {
    layers: Vec<GswSample>,
}

impl MultiLayerSamples {
    /// Rebuilds a ladder from individually stored layers; they must share
    /// seed and weight source and have strictly increasing deltas. A
    /// delta = 0 finest layer (an exact copy) is allowed here even though
    /// [`build_multilayer`] only builds positive ladders.
    pub fn from_layers(layers: Vec<GswSample>) -> Result<Self, SampleError> {
        if layers.is_empty()
            || !layers.iter().all(|l| l.delta >= 0.0 && l.delta.is_finite())
            || !layers.windows(2).all(|w| w[0].delta < w[1].delta)
        {
            return Err(SampleError::UnsortedDeltas);
        }
        let first = &layers[0];
        if !layers
            .iter()
            .all(|l| l.seed == first.seed && l.weight_source == first.weight_source)
        {
            return Err(SampleError::MalformedFile(
                "layers disagree on seed or weight source".to_string(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[GswSample] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<GswSample> {
        self.layers
    }

    /// Layer with the smallest delta (largest, most accurate sample).
    pub fn finest(&self) -> &GswSample {
        &self.layers[0]
    }
}

/// Builds a ladder of nested samples; `deltas` must be strictly increasing
/// and positive.
pub fn build_multilayer(
    table: &TimeSeriesTable,
    weights: &[f64],
    source: WeightSource,
    deltas: &[f64],
    seed: u64,
) -> Result<MultiLayerSamples, SampleError> {
    if deltas.is_empty()
        || !deltas.iter().all(|d| d.is_finite() && *d > 0.0)
        || !deltas.windows(2).all(|w| w[0] < w[1])
    {
        return Err(SampleError::UnsortedDeltas);
    }
    // The finest layer is drawn from the table; coarser layers are filtered
    // from it, which is exact because retention is monotone in the key.
    let finest = gsw_draw(table, weights, source.clone(), deltas[0], seed)?;
    let mut layers = Vec::with_capacity(deltas.len());
    for (j, &delta) in deltas.iter().enumerate() {
        if j == 0 {
            layers.push(finest.clone());
        } else {
            let rows: Vec<SampleRow> = finest
                .rows
                .iter()
                .filter(|r| r.key() >= delta)
                .cloned()
                .collect();
            layers.push(GswSample {
                delta,
                seed,
                weight_source: source.clone(),
                schema: finest.schema.clone(),
                rows,
            });
        }
    }
    Ok(MultiLayerSamples { layers })
}
