//! Uniform Bernoulli sampling baseline: every row is drawn with the same
//! probability `p`, and the subset-sum estimator rescales by exactly `1/p`.

use super::{SampleError, SampleSchema};
use crate::rng::unit_uniform;
use crate::table::{DimLookup, DimRef, DimValue, TimeSeriesTable};

#[derive(Debug, Clone, PartialEq)]
pub struct UniformRow {
    pub row_id: u64,
    pub dims: Vec<DimValue>,
    pub measures: Vec<f64>,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformSample {
    pub p: f64,
    pub seed: u64,
    pub schema: SampleSchema,
    pub rows: Vec<UniformRow>,
}

impl UniformSample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The estimator rescale factor, exactly `1/p`.
    pub fn rescale(&self) -> f64 {
        1.0 / self.p
    }

    pub fn row_view<'a>(&'a self, row: &'a UniformRow) -> UniformRowView<'a> {
        UniformRowView {
            schema: &self.schema,
            row,
        }
    }
}

pub struct UniformRowView<'a> {
    schema: &'a SampleSchema,
    row: &'a UniformRow,
}

impl DimLookup for UniformRowView<'_> {
    fn dim(&self, name: &str) -> Option<DimRef<'_>> {
        self.schema
            .dims
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| self.row.dims[i].as_ref())
    }
}

/// Draws an i.i.d. Bernoulli(`p`) sample with per-row uniforms keyed on
/// `(seed, row_id)`.
pub fn uniform_draw(
    table: &TimeSeriesTable,
    p: f64,
    seed: u64,
) -> Result<UniformSample, SampleError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SampleError::InvalidProbability(p));
    }
    let schema = SampleSchema::of_table(table);
    let mut rows = Vec::new();
    for i in 0..table.len() {
        if unit_uniform(seed, i as u64) <= p {
            rows.push(UniformRow {
                row_id: i as u64,
                dims: table.dims().iter().map(|c| c.data.get_owned(i)).collect(),
                measures: table.measures().iter().map(|c| c.values[i]).collect(),
                ts: table.timestamps()[i],
            });
        }
    }
    Ok(UniformSample {
        p,
        seed,
        schema,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{DimColumn, DimData, MeasureColumn};

    fn table(n: usize) -> TimeSeriesTable {
        TimeSeriesTable::from_columns(
            vec![DimColumn {
                name: "Bucket".into(),
                data: DimData::Int((0..n as i64).collect()),
            }],
            vec![MeasureColumn {
                name: "M".into(),
                values: vec![1.0; n],
            }],
            vec![0; n],
        )
        .unwrap()
    }

    #[test]
    fn p_one_keeps_every_row() {
        let t = table(100);
        assert_eq!(uniform_draw(&t, 1.0, 3).unwrap().len(), 100);
    }

    #[test]
    fn sample_size_is_binomial() {
        let t = table(10_000);
        let s = uniform_draw(&t, 0.5, 8).unwrap();
        // 3 sigma = 3 * sqrt(n p q) = 150.
        assert!((s.len() as f64 - 5000.0).abs() < 150.0);
    }

    #[test]
    fn invalid_probability_rejected() {
        let t = table(1);
        for p in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                uniform_draw(&t, p, 0),
                Err(SampleError::InvalidProbability(_))
            ));
        }
    }

    /// Partitions sampled separately with the same seed merge to the
    /// whole-table sample, since inclusion is per-row independent.
    #[test]
    fn partition_merge_matches_whole_draw() {
        let t = table(500);
        let whole = uniform_draw(&t, 0.3, 12).unwrap();
        let merged: Vec<u64> = (0..500u64)
            .filter(|&i| unit_uniform(12, i) <= 0.3)
            .collect();
        let whole_ids: Vec<u64> = whole.rows.iter().map(|r| r.row_id).collect();
        assert_eq!(whole_ids, merged);
    }
}
