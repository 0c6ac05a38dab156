//! Synthetic datasets with normally distributed columns.
//!
//! A dataset is a sequence of segments. Within a segment every column is
//! drawn independently from its own normal distribution; changing the means
//! between segments gives piecewise-constant drift.
//!
//! Sampling uses ChaCha8 seeded from the dataset seed and the ziggurat
//! normal sampler from `rand_distr`, so a given spec always yields the same
//! rows.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dates;
use crate::error::{Error, Result};
use crate::model::{Column, Partition, Record, Schema, Value, ValueKind};

/// Text columns are zero-padded to this many digits.
pub const TEXT_WIDTH: usize = 12;
const TEXT_MAX: i64 = 999_999_999_999;

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ValueKind,
    pub mean: f64,
    pub stddev: f64,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ValueKind, mean: f64, stddev: f64) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            mean,
            stddev,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub rows: u64,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    schema: Schema,
    segments: Vec<Segment>,
    seed: u64,
    /// Date columns are offsets (in days) from this day number.
    base_date: i64,
}

impl DatasetSpec {
    pub fn new(segments: Vec<Segment>, seed: u64) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Config("a dataset needs at least one segment".into()))?;
        let schema = Schema::new(
            first
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                })
                .collect(),
        )?;
        for (i, seg) in segments.iter().enumerate() {
            if seg.rows == 0 {
                return Err(Error::Config(format!("segment {i} has no rows")));
            }
            if seg.columns.len() != schema.len() {
                return Err(Error::Config(format!(
                    "segment {i} has {} columns, expected {}",
                    seg.columns.len(),
                    schema.len()
                )));
            }
            for (c, col) in seg.columns.iter().zip(schema.columns()) {
                if c.name != col.name || c.kind != col.kind {
                    return Err(Error::Config(format!(
                        "segment {i} column `{}` does not match `{}:{}`",
                        c.name, col.name, col.kind
                    )));
                }
                if !(c.stddev > 0.0 && c.stddev.is_finite() && c.mean.is_finite()) {
                    return Err(Error::Config(format!(
                        "segment {i} column `{}` needs a finite mean and a positive stddev",
                        c.name
                    )));
                }
            }
        }
        Ok(DatasetSpec {
            schema,
            segments,
            seed,
            base_date: dates::parse_days("2000-01-01")?,
        })
    }

    pub fn with_base_date(mut self, days: i64) -> Self {
        self.base_date = days;
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_date(&self) -> i64 {
        self.base_date
    }

    pub fn total_rows(&self) -> u64 {
        self.segments.iter().map(|s| s.rows).sum()
    }

    /// Exclusive end position of each segment.
    pub fn segment_ends(&self) -> Vec<u64> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                *acc += s.rows;
                Some(*acc)
            })
            .collect()
    }
}

pub fn render_text(n: i64) -> String {
    format!("{:0width$}", n.clamp(0, TEXT_MAX), width = TEXT_WIDTH)
}

/// Row stream for a [`DatasetSpec`].
pub struct Generator<'a> {
    spec: &'a DatasetSpec,
    rng: ChaCha8Rng,
    segment: usize,
    emitted_in_segment: u64,
    normals: Vec<Normal<f64>>,
}

impl Iterator for Generator<'_> {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        while self.emitted_in_segment >= self.spec.segments.get(self.segment)?.rows {
            self.segment += 1;
            self.emitted_in_segment = 0;
            let seg = self.spec.segments.get(self.segment)?;
            self.normals = normals_for(seg);
        }
        self.emitted_in_segment += 1;
        let seg = &self.spec.segments[self.segment];
        let values = seg
            .columns
            .iter()
            .zip(&self.normals)
            .map(|(col, normal)| {
                let x = normal.sample(&mut self.rng);
                match col.kind {
                    ValueKind::Integer => Value::Integer(x.round() as i64),
                    ValueKind::Date => Value::Date(self.spec.base_date + x.round() as i64),
                    ValueKind::Text => Value::text(render_text(x.round() as i64)),
                    ValueKind::Real => Value::Real(x),
                }
            })
            .collect();
        Some(Record::new(values))
    }
}

fn normals_for(seg: &Segment) -> Vec<Normal<f64>> {
    seg.columns
        .iter()
        .map(|c| Normal::new(c.mean, c.stddev).expect("validated stddev"))
        .collect()
}

pub fn generate(spec: &DatasetSpec) -> Generator<'_> {
    Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        segment: 0,
        emitted_in_segment: 0,
        normals: normals_for(&spec.segments[0]),
    }
}

/// Contiguous chunks of `size` rows; the last one may be shorter.
pub fn partition(stream: impl IntoIterator<Item = Record>, size: usize) -> Result<Vec<Partition>> {
    if size == 0 {
        return Err(Error::Config("partition size must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    let mut offset = 0u64;
    for record in stream {
        current.push(record);
        if current.len() == size {
            let records = std::mem::replace(&mut current, Vec::with_capacity(size));
            out.push(Partition { offset, records });
            offset += size as u64;
        }
    }
    if !current.is_empty() {
        out.push(Partition {
            offset,
            records: current,
        });
    }
    Ok(out)
}

pub fn generate_partitions(spec: &DatasetSpec, size: usize) -> Result<Vec<Partition>> {
    partition(generate(spec), size)
}

/// Writes the text form: a `name:kind,...` header, then one row per record.
pub fn write_dataset<W: Write>(
    out: W,
    schema: &Schema,
    records: impl IntoIterator<Item = Record>,
) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(schema.columns().iter().map(|c| format!("{}:{}", c.name, c.kind)))?;
    let mut fields: Vec<String> = Vec::with_capacity(schema.len());
    for r in records {
        fields.clear();
        fields.extend(r.values().iter().map(|v| match v {
            Value::Integer(x) => x.to_string(),
            Value::Real(x) => x.to_string(),
            Value::Date(d) => dates::format_days(*d),
            Value::Text(t) => String::from_utf8_lossy(t).into_owned(),
        }));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<(Schema, Vec<Record>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = rdr.records();
    let header = rows
        .next()
        .ok_or(Error::Format {
            line: 1,
            message: "missing header".into(),
        })?
        .map_err(|e| format_error(1, e))?;
    let mut columns = Vec::with_capacity(header.len());
    for field in header.iter() {
        let (name, kind) = field.split_once(':').ok_or_else(|| Error::Format {
            line: 1,
            message: format!("header field `{field}` is not `name:kind`"),
        })?;
        columns.push(Column {
            name: name.trim().to_string(),
            kind: ValueKind::parse(kind)?,
        });
    }
    let schema = Schema::new(columns)?;
    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| format_error(line, e))?;
        if row.len() != schema.len() {
            return Err(Error::Format {
                line,
                message: format!("expected {} fields, found {}", schema.len(), row.len()),
            });
        }
        let values = row
            .iter()
            .zip(schema.columns())
            .map(|(field, col)| parse_field(field, col.kind).map_err(|message| Error::Format { line, message }))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record::new(values));
    }
    Ok((schema, records))
}

fn format_error(line: usize, e: csv::Error) -> Error {
    Error::Format {
        line,
        message: e.to_string(),
    }
}

fn parse_field(field: &str, kind: ValueKind) -> std::result::Result<Value, String> {
    match kind {
        ValueKind::Integer => field.parse().map(Value::Integer).map_err(|e| format!("`{field}`: {e}")),
        ValueKind::Real => field.parse().map(Value::Real).map_err(|e| format!("`{field}`: {e}")),
        ValueKind::Date => dates::parse_days(field).map(Value::Date).map_err(|e| e.to_string()),
        ValueKind::Text => Ok(Value::text(field)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_segment(rows: u64, columns: Vec<ColumnSpec>) -> DatasetSpec {
        DatasetSpec::new(vec![Segment { rows, columns }], 42).unwrap()
    }

    #[test]
    fn tiny_stddev_gives_the_mean() {
        let spec = one_segment(100, vec![ColumnSpec::new("x", ValueKind::Integer, 50.0, 1e-9)]);
        assert!(generate(&spec).all(|r| r.values()[0] == Value::Integer(50)));
    }

    #[test]
    fn text_is_zero_padded_and_ordered() {
        assert_eq!(render_text(42), "000000000042");
        assert_eq!(render_text(-5), "000000000000");
        assert!(render_text(99) < render_text(100));
        let spec = one_segment(200, vec![ColumnSpec::new("t", ValueKind::Text, 1000.0, 300.0)]);
        for r in generate(&spec) {
            let Value::Text(t) = &r.values()[0] else {
                panic!("not text")
            };
            assert_eq!(t.len(), TEXT_WIDTH);
        }
    }

    #[test]
    fn dates_offset_from_base() {
        let spec = one_segment(10, vec![ColumnSpec::new("d", ValueKind::Date, 3.0, 1e-9)]).with_base_date(100);
        assert!(generate(&spec).all(|r| r.values()[0] == Value::Date(103)));
    }

    #[test]
    fn segments_are_emitted_in_order() {
        let spec = DatasetSpec::new(
            vec![
                Segment {
                    rows: 3,
                    columns: vec![ColumnSpec::new("x", ValueKind::Integer, 1.0, 1e-9)],
                },
                Segment {
                    rows: 2,
                    columns: vec![ColumnSpec::new("x", ValueKind::Integer, 9.0, 1e-9)],
                },
            ],
            1,
        )
        .unwrap();
        let xs: Vec<Value> = generate(&spec).map(|r| r.values()[0].clone()).collect();
        assert_eq!(xs, [1, 1, 1, 9, 9].map(Value::Integer).to_vec());
        assert_eq!(spec.segment_ends(), vec![3, 5]);
        assert_eq!(spec.total_rows(), 5);
    }

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec::new(vec![], 1).is_err());
        let bad_std = Segment {
            rows: 1,
            columns: vec![ColumnSpec::new("x", ValueKind::Integer, 0.0, 0.0)],
        };
        assert!(DatasetSpec::new(vec![bad_std], 1).is_err());
        let a = Segment {
            rows: 1,
            columns: vec![ColumnSpec::new("x", ValueKind::Integer, 0.0, 1.0)],
        };
        let b = Segment {
            rows: 1,
            columns: vec![ColumnSpec::new("y", ValueKind::Integer, 0.0, 1.0)],
        };
        assert!(DatasetSpec::new(vec![a, b], 1).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = one_segment(
            500,
            vec![
                ColumnSpec::new("i", ValueKind::Integer, 0.0, 100.0),
                ColumnSpec::new("t", ValueKind::Text, 5000.0, 100.0),
            ],
        );
        let a: Vec<Record> = generate(&spec).collect();
        let b: Vec<Record> = generate(&spec).collect();
        assert_eq!(a, b);
        let other = DatasetSpec::new(spec.segments().to_vec(), 43).unwrap();
        assert_ne!(a, generate(&other).collect::<Vec<_>>());
    }

    #[test]
    fn partition_sizes() {
        let rec = |i: i64| Record::new(vec![Value::Integer(i)]);
        let parts = partition((0..10).map(rec), 4).unwrap();
        assert_eq!(parts.iter().map(Partition::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(parts.iter().map(|p| p.offset).collect::<Vec<_>>(), vec![0, 4, 8]);
        assert_eq!(partition((0..10).map(rec), 10).unwrap().len(), 1);
        assert_eq!(partition((0..10).map(rec), 50).unwrap().len(), 1);
        assert!(partition((0..10).map(rec), 0).is_err());
        let flat: Vec<Record> = parts.into_iter().flat_map(|p| p.records).collect();
        assert_eq!(flat, (0..10).map(rec).collect::<Vec<_>>());
    }

    #[test]
    fn text_file_round_trip() {
        let spec = one_segment(
            50,
            vec![
                ColumnSpec::new("d", ValueKind::Date, 0.0, 300.0),
                ColumnSpec::new("i", ValueKind::Integer, 0.0, 1000.0),
                ColumnSpec::new("t", ValueKind::Text, 1e6, 1000.0),
                ColumnSpec::new("r", ValueKind::Real, 0.0, 1.0),
            ],
        );
        let mut buf = Vec::new();
        write_dataset(&mut buf, spec.schema(), generate(&spec)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("d:date,i:integer,t:text,r:real\n"));
        let (schema, records) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(&schema, spec.schema());
        assert_eq!(records, generate(&spec).collect::<Vec<_>>());
    }

    #[test]
    fn read_rejects_bad_rows() {
        assert!(read_dataset("".as_bytes()).is_err());
        assert!(read_dataset("x\n1\n".as_bytes()).is_err());
        assert!(read_dataset("x:integer\nabc\n".as_bytes()).is_err());
        assert!(read_dataset("x:date\n2000-02-30\n".as_bytes()).is_err());
    }
}
