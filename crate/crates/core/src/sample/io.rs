//! Sample persistence.
//!
//! A sample file is self-describing: a JSON header line recording delta,
//! seed, weight source and column schema, followed by CSV rows
//! `(row_id, u, w, dims..., measures..., ts)`. Floats are written in
//! shortest round-trip form, so load(write(s)) == s bit-for-bit.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{DimKind, GswSample, SampleError, SampleRow, SampleSchema, WeightSource};
use crate::table::DimValue;

#[derive(Serialize, Deserialize)]
struct Header {
    delta: f64,
    seed: u64,
    weight_source: String,
    dims: Vec<(String, String)>,
    measures: Vec<String>,
}

pub fn write_sample(sample: &GswSample, mut out: impl Write) -> Result<(), SampleError> {
    let header = Header {
        delta: sample.delta,
        seed: sample.seed,
        weight_source: sample.weight_source.to_string(),
        dims: sample
            .schema
            .dims
            .iter()
            .map(|(n, k)| {
                let kind = match k {
                    DimKind::Int => "int",
                    DimKind::Str => "str",
                };
                (n.clone(), kind.to_string())
            })
            .collect(),
        measures: sample.schema.measures.clone(),
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| SampleError::MalformedFile(e.to_string()))?;
    writeln!(out, "{header_json}")?;

    let mut w = csv::Writer::from_writer(out);
    let mut field = String::new();
    for row in &sample.rows {
        use std::fmt::Write as _;
        field.clear();
        write!(field, "{}", row.row_id).unwrap();
        w.write_field(&field)?;
        field.clear();
        write!(field, "{}", row.u).unwrap();
        w.write_field(&field)?;
        field.clear();
        write!(field, "{}", row.weight).unwrap();
        w.write_field(&field)?;
        for d in &row.dims {
            field.clear();
            write!(field, "{d}").unwrap();
            w.write_field(&field)?;
        }
        for m in &row.measures {
            field.clear();
            write!(field, "{m}").unwrap();
            w.write_field(&field)?;
        }
        field.clear();
        write!(field, "{}", row.ts).unwrap();
        w.write_field(&field)?;
        w.write_record(None::<&[u8]>)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sample(input: impl Read) -> Result<GswSample, SampleError> {
    let mut reader = BufReader::new(input);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: Header = serde_json::from_str(header_line.trim_end())
        .map_err(|e| SampleError::MalformedFile(format!("bad header: {e}")))?;

    let mut dims = Vec::with_capacity(header.dims.len());
    for (name, kind) in &header.dims {
        let kind = match kind.as_str() {
            "int" => DimKind::Int,
            "str" => DimKind::Str,
            other => {
                return Err(SampleError::MalformedFile(format!(
                    "bad dim kind `{other}`"
                )))
            }
        };
        dims.push((name.clone(), kind));
    }
    let schema = SampleSchema {
        dims,
        measures: header.measures.clone(),
    };
    let weight_source: WeightSource = header.weight_source.parse()?;

    let n_dims = schema.dims.len();
    let n_measures = schema.measures.len();
    let expected_fields = 3 + n_dims + n_measures + 1;

    let mut rows = Vec::new();
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    for (i, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| SampleError::MalformedFile(e.to_string()))?;
        if record.len() != expected_fields {
            return Err(SampleError::MalformedFile(format!(
                "row {i}: expected {expected_fields} fields, got {}",
                record.len()
            )));
        }
        let parse_f64 = |s: &str| -> Result<f64, SampleError> {
            s.parse()
                .map_err(|_| SampleError::MalformedFile(format!("row {i}: bad float `{s}`")))
        };
        let row_id: u64 = record[0]
            .parse()
            .map_err(|_| SampleError::MalformedFile(format!("row {i}: bad id")))?;
        let u = parse_f64(&record[1])?;
        let weight = parse_f64(&record[2])?;
        let mut dim_values = Vec::with_capacity(n_dims);
        for (j, (_, kind)) in schema.dims.iter().enumerate() {
            let raw = &record[3 + j];
            dim_values.push(match kind {
                DimKind::Int => DimValue::Int(raw.parse().map_err(|_| {
                    SampleError::MalformedFile(format!("row {i}: bad int dim `{raw}`"))
                })?),
                DimKind::Str => DimValue::Str(raw.to_string()),
            });
        }
        let mut measures = Vec::with_capacity(n_measures);
        for j in 0..n_measures {
            measures.push(parse_f64(&record[3 + n_dims + j])?);
        }
        let ts: i64 = record[3 + n_dims + n_measures]
            .parse()
            .map_err(|_| SampleError::MalformedFile(format!("row {i}: bad ts")))?;
        rows.push(SampleRow {
            row_id,
            u,
            weight,
            dims: dim_values,
            measures,
            ts,
        });
    }

    Ok(GswSample {
        delta: header.delta,
        seed: header.seed,
        weight_source,
        schema,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::unit_uniform;
    use crate::sample::gsw_draw;
    use crate::table::{DimColumn, DimData, MeasureColumn, TimeSeriesTable};

    fn sample() -> GswSample {
        let n = 500usize;
        let weights: Vec<f64> = (0..n)
            .map(|i| unit_uniform(3, i as u64).powf(-1.0 / 1.5))
            .collect();
        let t = TimeSeriesTable::from_columns(
            vec![
                DimColumn {
                    name: "Age".into(),
                    data: DimData::Int((0..n as i64).map(|i| i % 60).collect()),
                },
                DimColumn {
                    name: "Gender".into(),
                    data: DimData::Str(
                        (0..n).map(|i| if i % 2 == 0 { "F" } else { "M" }.into()).collect(),
                    ),
                },
            ],
            vec![MeasureColumn {
                name: "Impression".into(),
                values: weights.clone(),
            }],
            (0..n as i64).map(|i| 20200301 + i % 5).collect(),
        )
        .unwrap();
        gsw_draw(
            &t,
            &weights,
            WeightSource::Measure("Impression".into()),
            2.0,
            99,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_sample_bits() {
        let s = sample();
        let mut bytes = Vec::new();
        write_sample(&s, &mut bytes).unwrap();
        let loaded = read_sample(bytes.as_slice()).unwrap();
        assert_eq!(loaded.delta, s.delta);
        assert_eq!(loaded.seed, s.seed);
        assert_eq!(loaded.weight_source, s.weight_source);
        assert_eq!(loaded.schema, s.schema);
        assert_eq!(loaded.rows.len(), s.rows.len());
        for (a, b) in loaded.rows.iter().zip(&s.rows) {
            assert_eq!(a.u.to_bits(), b.u.to_bits());
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            assert_eq!(a, b);
        }

        // Writing again yields identical bytes.
        let mut bytes2 = Vec::new();
        write_sample(&loaded, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(
            read_sample("not json\n".as_bytes()),
            Err(SampleError::MalformedFile(_))
        ));
    }
}
