//! In-memory columnar time-series relation.
//!
//! A table holds named dimension columns (integer or string), strictly
//! positive numeric measure columns, and one integer timestamp column.
//! Storage is one array per column: full scans and per-partition sampling
//! walk contiguous memory. Tables are immutable after load; reads are safe
//! from any number of threads.

mod constraint;

pub use constraint::{CmpOp, Constraint, ConstraintError, DimLookup, DimRef, Literal};

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

use crate::kahan::KahanSum;

/// Role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Dim,
    Measure,
    Timestamp,
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnRole::Dim => "dim",
            ColumnRole::Measure => "measure",
            ColumnRole::Timestamp => "ts",
        })
    }
}

/// Column-to-role assignment, parsed from a schema file with one
/// `column=dim|measure|ts` line per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSpec {
    roles: Vec<(String, ColumnRole)>,
}

impl SchemaSpec {
    pub fn new(roles: Vec<(String, ColumnRole)>) -> Self {
        Self { roles }
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut roles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, role) = line
                .split_once('=')
                .ok_or(TableError::MalformedSchema { line: lineno + 1 })?;
            let role = match role.trim() {
                "dim" => ColumnRole::Dim,
                "measure" => ColumnRole::Measure,
                "ts" => ColumnRole::Timestamp,
                _ => return Err(TableError::MalformedSchema { line: lineno + 1 }),
            };
            roles.push((name.trim().to_string(), role));
        }
        Ok(Self { roles })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, role) in &self.roles {
            out.push_str(name);
            out.push('=');
            out.push_str(&role.to_string());
            out.push('\n');
        }
        out
    }

    pub fn roles(&self) -> &[(String, ColumnRole)] {
        &self.roles
    }

    fn role_of(&self, column: &str) -> Option<ColumnRole> {
        self.roles
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, role)| *role)
    }
}

/// One dimension value owned by a sample or table row copy.
#[derive(Debug, Clone, PartialEq)]
pub enum DimValue {
    Int(i64),
    Str(String),
}

impl DimValue {
    pub fn as_ref(&self) -> DimRef<'_> {
        match self {
            DimValue::Int(v) => DimRef::Int(*v),
            DimValue::Str(s) => DimRef::Str(s),
        }
    }
}

impl fmt::Display for DimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimValue::Int(v) => write!(f, "{v}"),
            DimValue::Str(s) => f.write_str(s),
        }
    }
}

/// Columnar storage of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum DimData {
    Int(Vec<i64>),
    Str(Vec<String>),
}

impl DimData {
    fn len(&self) -> usize {
        match self {
            DimData::Int(v) => v.len(),
            DimData::Str(v) => v.len(),
        }
    }

    pub fn get(&self, row: usize) -> DimRef<'_> {
        match self {
            DimData::Int(v) => DimRef::Int(v[row]),
            DimData::Str(v) => DimRef::Str(&v[row]),
        }
    }

    pub fn get_owned(&self, row: usize) -> DimValue {
        match self {
            DimData::Int(v) => DimValue::Int(v[row]),
            DimData::Str(v) => DimValue::Str(v[row].clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimColumn {
    pub name: String,
    pub data: DimData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// A named strictly-positive measure vector, aligned to some row set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVector {
    pub name: String,
    pub values: Vec<f64>,
}

impl MeasureVector {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self, TableError> {
        let name = name.into();
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(TableError::NonPositiveMeasure {
                    row: i,
                    column: name,
                });
            }
        }
        Ok(Self { name, values })
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("column `{0}` required by the schema is missing from the input")]
    MissingColumn(String),
    #[error("column `{0}` in the input has no role in the schema")]
    UnassignedColumn(String),
    #[error("schema assigns no timestamp column")]
    MissingTimestamp,
    #[error("measure `{column}` is not strictly positive at row {row}")]
    NonPositiveMeasure { row: usize, column: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("malformed schema line {line}")]
    MalformedSchema { line: usize },
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("unknown timestamp {0}")]
    UnknownTimestamp(i64),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Options controlling CSV ingestion.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// When set, measure values equal to zero are replaced by this epsilon
    /// instead of being rejected. Negative measures are always rejected.
    pub zero_epsilon: Option<f64>,
}

impl LoadOptions {
    pub const DEFAULT_EPSILON: f64 = 1e-9;
}

enum ColumnSlot {
    Dim(usize),
    Measure(usize),
    Timestamp,
}

/// Immutable columnar relation of (dims; measures; timestamp) rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    dims: Vec<DimColumn>,
    measures: Vec<MeasureColumn>,
    ts: Vec<i64>,
    /// Input column order, for re-serialization.
    column_order: Vec<(String, ColumnRole)>,
}

/// One row of a table, usable for constraint evaluation.
pub struct RowView<'a> {
    table: &'a TimeSeriesTable,
    row: usize,
}

impl DimLookup for RowView<'_> {
    fn dim(&self, name: &str) -> Option<DimRef<'_>> {
        self.table
            .dims
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.data.get(self.row))
    }
}

impl TimeSeriesTable {
    /// Loads a table from CSV bytes. The first row must be a header; the
    /// schema must assign exactly one role to every header column.
    pub fn load_csv(
        source: impl Read,
        schema: &SchemaSpec,
        options: &LoadOptions,
    ) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(source);

        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.to_string())
            .collect();

        for (name, _) in schema.roles() {
            if !headers.iter().any(|h| h == name) {
                return Err(TableError::MissingColumn(name.clone()));
            }
        }

        let mut slots = Vec::with_capacity(headers.len());
        let mut column_order = Vec::with_capacity(headers.len());
        let mut dims: Vec<DimColumn> = Vec::new();
        let mut measures: Vec<MeasureColumn> = Vec::new();
        let mut raw_dims: Vec<Vec<String>> = Vec::new();
        let mut saw_ts = false;

        for name in &headers {
            let role = schema
                .role_of(name)
                .ok_or_else(|| TableError::UnassignedColumn(name.clone()))?;
            column_order.push((name.clone(), role));
            match role {
                ColumnRole::Dim => {
                    slots.push(ColumnSlot::Dim(raw_dims.len()));
                    raw_dims.push(Vec::new());
                    dims.push(DimColumn {
                        name: name.clone(),
                        data: DimData::Int(Vec::new()),
                    });
                }
                ColumnRole::Measure => {
                    slots.push(ColumnSlot::Measure(measures.len()));
                    measures.push(MeasureColumn {
                        name: name.clone(),
                        values: Vec::new(),
                    });
                }
                ColumnRole::Timestamp => {
                    slots.push(ColumnSlot::Timestamp);
                    saw_ts = true;
                }
            }
        }
        if !saw_ts {
            return Err(TableError::MissingTimestamp);
        }

        let mut ts: Vec<i64> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            // Header is line 1, first data row line 2.
            let line = i + 2;
            if record.len() != slots.len() {
                return Err(TableError::MalformedRow {
                    line,
                    reason: format!("expected {} fields, got {}", slots.len(), record.len()),
                });
            }
            for (slot, field) in slots.iter().zip(record.iter()) {
                match slot {
                    ColumnSlot::Dim(j) => raw_dims[*j].push(field.to_string()),
                    ColumnSlot::Measure(j) => {
                        let mut v: f64 =
                            field.parse().map_err(|_| TableError::MalformedRow {
                                line,
                                reason: format!("measure value `{field}` is not numeric"),
                            })?;
                        if v == 0.0 {
                            match options.zero_epsilon {
                                Some(eps) => v = eps,
                                None => {
                                    return Err(TableError::NonPositiveMeasure {
                                        row: i,
                                        column: measures[*j].name.clone(),
                                    })
                                }
                            }
                        }
                        if !(v > 0.0) || !v.is_finite() {
                            return Err(TableError::NonPositiveMeasure {
                                row: i,
                                column: measures[*j].name.clone(),
                            });
                        }
                        measures[*j].values.push(v);
                    }
                    ColumnSlot::Timestamp => {
                        ts.push(field.parse().map_err(|_| TableError::MalformedRow {
                            line,
                            reason: format!("timestamp `{field}` is not an integer"),
                        })?);
                    }
                }
            }
        }

        // A dimension column is integer-typed iff every value parses as i64.
        for (col, raw) in dims.iter_mut().zip(raw_dims) {
            let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse().ok()).collect();
            col.data = match ints {
                Some(v) => DimData::Int(v),
                None => DimData::Str(raw),
            };
        }

        Ok(Self {
            dims,
            measures,
            ts,
            column_order,
        })
    }

    /// Re-emits the table as CSV in the original column order. Floats print
    /// in shortest round-trip form, so loading canonical output re-emits
    /// byte-identical bytes.
    pub fn write_csv(&self, out: impl Write) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.column_order.iter().map(|(n, _)| n.as_str()))?;
        let mut field = String::new();
        for row in 0..self.len() {
            for (name, role) in &self.column_order {
                field.clear();
                match role {
                    ColumnRole::Dim => {
                        let col = self.dims.iter().find(|c| &c.name == name).unwrap();
                        fmt::write(&mut field, format_args!("{}", col.data.get_owned(row)))
                            .unwrap();
                    }
                    ColumnRole::Measure => {
                        let col = self.measures.iter().find(|c| &c.name == name).unwrap();
                        fmt::write(&mut field, format_args!("{}", col.values[row])).unwrap();
                    }
                    ColumnRole::Timestamp => {
                        fmt::write(&mut field, format_args!("{}", self.ts[row])).unwrap();
                    }
                }
                w.write_field(&field)?;
            }
            w.write_record(None::<&[u8]>)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn dims(&self) -> &[DimColumn] {
        &self.dims
    }

    pub fn measures(&self) -> &[MeasureColumn] {
        &self.measures
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.ts
    }

    /// Sorted distinct timestamps.
    pub fn timestamp_domain(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self.ts.iter().copied().collect();
        set.into_iter().collect()
    }

    pub fn row(&self, row: usize) -> RowView<'_> {
        RowView { table: self, row }
    }

    pub fn measure(&self, name: &str) -> Result<&[f64], TableError> {
        self.measures
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| TableError::UnknownMeasure(name.to_string()))
    }

    pub fn measure_vector(&self, name: &str) -> Result<MeasureVector, TableError> {
        Ok(MeasureVector {
            name: name.to_string(),
            values: self.measure(name)?.to_vec(),
        })
    }

    pub fn measure_names(&self) -> Vec<String> {
        self.measures.iter().map(|c| c.name.clone()).collect()
    }

    /// Builds a table directly from columns (used by synthetic generators).
    pub fn from_columns(
        dims: Vec<DimColumn>,
        measures: Vec<MeasureColumn>,
        ts: Vec<i64>,
    ) -> Result<Self, TableError> {
        let n = ts.len();
        for d in &dims {
            if d.data.len() != n {
                return Err(TableError::MalformedRow {
                    line: 0,
                    reason: format!("dimension `{}` length mismatch", d.name),
                });
            }
        }
        for m in &measures {
            if m.values.len() != n {
                return Err(TableError::MalformedRow {
                    line: 0,
                    reason: format!("measure `{}` length mismatch", m.name),
                });
            }
            for (i, &v) in m.values.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(TableError::NonPositiveMeasure {
                        row: i,
                        column: m.name.clone(),
                    });
                }
            }
        }
        let mut column_order: Vec<(String, ColumnRole)> = Vec::new();
        for d in &dims {
            column_order.push((d.name.clone(), ColumnRole::Dim));
        }
        for m in &measures {
            column_order.push((m.name.clone(), ColumnRole::Measure));
        }
        column_order.push(("ts".to_string(), ColumnRole::Timestamp));
        Ok(Self {
            dims,
            measures,
            ts,
            column_order,
        })
    }

    /// Evaluates `c` on row `row`.
    pub fn eval_constraint(&self, row: usize, c: &Constraint) -> Result<bool, TableError> {
        Ok(c.eval(&self.row(row))?)
    }

    /// Exact `SUM(measure)` over rows satisfying `c` at timestamp `ts`.
    /// Returns 0 when no row matches.
    pub fn exact_subset_sum(
        &self,
        c: &Constraint,
        measure: &str,
        ts: i64,
    ) -> Result<f64, TableError> {
        let values = self.measure(measure)?;
        if !self.ts.contains(&ts) {
            return Err(TableError::UnknownTimestamp(ts));
        }
        let mut acc = KahanSum::new();
        for row in 0..self.len() {
            if self.ts[row] == ts && c.eval(&self.row(row))? {
                acc.add(values[row]);
            }
        }
        Ok(acc.total())
    }

    /// Exact matching-row count for `(c, ts)`.
    pub fn exact_subset_count(&self, c: &Constraint, ts: i64) -> Result<usize, TableError> {
        if !self.ts.contains(&ts) {
            return Err(TableError::UnknownTimestamp(ts));
        }
        let mut n = 0;
        for row in 0..self.len() {
            if self.ts[row] == ts && c.eval(&self.row(row))? {
                n += 1;
            }
        }
        Ok(n)
    }
}
