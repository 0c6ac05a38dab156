//! Records, schemas and single-column comparison predicates.
//!
//! Everything here is immutable once built and can be shared freely between
//! tasks. Kind checking happens when a [`FilterQuery`] is constructed, so the
//! per-row evaluation path never has to report errors.

use std::cmp::Ordering;
use std::fmt;
use std::hint::black_box;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Integer,
    Date,
    Text,
    Real,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Integer => "integer",
            ValueKind::Date => "date",
            ValueKind::Text => "text",
            ValueKind::Real => "real",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "integer" | "int" => Ok(ValueKind::Integer),
            "date" => Ok(ValueKind::Date),
            "text" | "string" => Ok(ValueKind::Text),
            "real" | "float" => Ok(ValueKind::Real),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single typed cell. Dates are days since 1970-01-01; text is compared
/// bytewise.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Integer(i64),
    Date(i64),
    Text(Box<[u8]>),
    Real(f64),
}

impl Value {
    pub fn text(s: impl AsRef<[u8]>) -> Self {
        Value::Text(s.as_ref().into())
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Integer(_) => ValueKind::Integer,
            Value::Date(_) => ValueKind::Date,
            Value::Text(_) => ValueKind::Text,
            Value::Real(_) => ValueKind::Real,
        }
    }

    /// Total order within one kind. Comparing different kinds is an error.
    pub fn compare(&self, other: &Value) -> Result<Ordering> {
        compare_same_kind(self, other).ok_or(Error::KindMismatch {
            left: self.kind(),
            right: other.kind(),
        })
    }
}

#[inline]
fn compare_same_kind(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => Some(x.cmp(y)),
        (Value::Date(x), Value::Date(y)) => Some(x.cmp(y)),
        (Value::Text(x), Value::Text(y)) => Some(x.as_ref().cmp(y.as_ref())),
        (Value::Real(x), Value::Real(y)) => Some(x.total_cmp(y)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema needs at least one column".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::Schema(format!("column {i} has an empty name")));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    /// Convenience constructor from `(name, kind)` pairs.
    pub fn of(columns: &[(&str, ValueKind)]) -> Result<Self> {
        Schema::new(
            columns
                .iter()
                .map(|(name, kind)| Column {
                    name: (*name).to_string(),
                    kind: *kind,
                })
                .collect(),
        )
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn check(&self, record: &Record) -> Result<()> {
        if record.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "record has {} values, schema has {} columns",
                record.len(),
                self.columns.len()
            )));
        }
        for (i, (v, c)) in record.values().iter().zip(&self.columns).enumerate() {
            if v.kind() != c.kind {
                return Err(Error::Schema(format!(
                    "value {i} is {} but column `{}` is {}",
                    v.kind(),
                    c.name,
                    c.kind
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record(Box<[Value]>);

impl Record {
    pub fn new(values: Vec<Value>) -> Self {
        Record(values.into_boxed_slice())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.0.get(i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A contiguous run of records and the global position of its first row.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub offset: u64,
    pub records: Vec<Record>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Comparator {
    #[inline]
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            "==" | "=" => Comparator::Eq,
            "!=" | "<>" => Comparator::Ne,
            _ => return None,
        })
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Fixed arithmetic loop used to give predicates a controllable cost.
#[inline(never)]
pub fn busy_work(iterations: u32) -> u64 {
    let mut acc = black_box(0x9e37_79b9_7f4a_7c15_u64);
    for i in 0..iterations {
        acc = acc
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(u64::from(i) | 1);
    }
    black_box(acc)
}

/// `record[column] <comparator> threshold`, optionally padded with busy work.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    id: usize,
    column: usize,
    comparator: Comparator,
    threshold: Value,
    pad_iterations: u32,
}

impl Predicate {
    /// The id is assigned when the predicate is placed into a [`FilterQuery`].
    pub fn new(column: usize, comparator: Comparator, threshold: Value) -> Self {
        Predicate {
            id: 0,
            column,
            comparator,
            threshold,
            pad_iterations: 0,
        }
    }

    pub fn with_padding(mut self, iterations: u32) -> Self {
        self.pad_iterations = iterations;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn column(&self) -> usize {
        self.column
    }

    pub fn comparator(&self) -> Comparator {
        self.comparator
    }

    pub fn threshold(&self) -> &Value {
        &self.threshold
    }

    pub fn pad_iterations(&self) -> u32 {
        self.pad_iterations
    }

    /// Pure: the same record always gives the same answer. A record that does
    /// not conform to the query schema evaluates to `false`.
    #[inline]
    pub fn evaluate(&self, record: &Record) -> bool {
        if self.pad_iterations > 0 {
            busy_work(self.pad_iterations);
        }
        match record.0.get(self.column) {
            Some(v) => match compare_same_kind(v, &self.threshold) {
                Some(ord) => self.comparator.holds(ord),
                None => false,
            },
            None => false,
        }
    }

    pub fn display(&self, schema: &Schema) -> String {
        let col = schema
            .columns()
            .get(self.column)
            .map(|c| c.name.as_str())
            .unwrap_or("?");
        format!("{col} {} {}", self.comparator, render_literal(&self.threshold))
    }
}

fn render_literal(v: &Value) -> String {
    match v {
        Value::Integer(x) => x.to_string(),
        Value::Real(x) => x.to_string(),
        Value::Date(d) => crate::dates::format_days(*d),
        Value::Text(t) => format!("'{}'", String::from_utf8_lossy(t)),
    }
}

/// A conjunction of predicates in the order the user wrote them.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterQuery {
    schema: Schema,
    predicates: Vec<Predicate>,
}

impl FilterQuery {
    pub fn new(schema: Schema, mut predicates: Vec<Predicate>) -> Result<Self> {
        if predicates.is_empty() {
            return Err(Error::Schema("a filter query needs at least one predicate".into()));
        }
        for (id, p) in predicates.iter_mut().enumerate() {
            let column = schema.columns().get(p.column).ok_or_else(|| {
                Error::Schema(format!(
                    "predicate {id} refers to column {} of a {}-column schema",
                    p.column,
                    schema.len()
                ))
            })?;
            if column.kind != p.threshold.kind() {
                return Err(Error::KindMismatch {
                    left: column.kind,
                    right: p.threshold.kind(),
                });
            }
            p.id = id;
        }
        Ok(FilterQuery { schema, predicates })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    /// Same query with a new padding per predicate (user order).
    pub fn with_padding(&self, padding: &[u32]) -> Result<Self> {
        if padding.len() != self.predicates.len() {
            return Err(Error::LengthMismatch {
                expected: self.predicates.len(),
                actual: padding.len(),
            });
        }
        let predicates = self
            .predicates
            .iter()
            .zip(padding)
            .map(|(p, &pad)| p.clone().with_padding(pad))
            .collect();
        FilterQuery::new(self.schema.clone(), predicates)
    }

    /// Reference semantics: every predicate, user order, no reordering.
    pub fn naive_conjunction(&self, record: &Record) -> bool {
        self.predicates.iter().all(|p| p.evaluate(record))
    }
}

impl fmt::Display for FilterQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clauses: Vec<String> = self.predicates.iter().map(|p| p.display(&self.schema)).collect();
        f.write_str(&clauses.join(" && "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_schema() -> Schema {
        Schema::of(&[("col0", ValueKind::Integer)]).unwrap()
    }

    #[test]
    fn strict_greater_than() {
        let p = Predicate::new(0, Comparator::Gt, Value::Integer(7));
        assert!(p.evaluate(&Record::new(vec![Value::Integer(9)])));
        assert!(!p.evaluate(&Record::new(vec![Value::Integer(7)])));
    }

    #[test]
    fn text_equality() {
        let p = Predicate::new(0, Comparator::Eq, Value::text("abc"));
        assert!(p.evaluate(&Record::new(vec![Value::text("abc")])));
        assert!(!p.evaluate(&Record::new(vec![Value::text("abd")])));
    }

    #[test]
    fn text_is_bytewise() {
        let a = Value::text("Zeta");
        let b = Value::text("alpha");
        assert_eq!(a.compare(&b).unwrap(), Ordering::Less);
    }

    #[test]
    fn cross_kind_comparison_is_an_error() {
        let err = Value::Integer(1).compare(&Value::Date(1)).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }

    #[test]
    fn comparator_table() {
        use Comparator::*;
        let cases = [
            (Lt, [true, false, false]),
            (Le, [true, true, false]),
            (Gt, [false, false, true]),
            (Ge, [false, true, true]),
            (Eq, [false, true, false]),
            (Ne, [true, false, true]),
        ];
        for (cmp, expect) in cases {
            let got = [Ordering::Less, Ordering::Equal, Ordering::Greater].map(|o| cmp.holds(o));
            assert_eq!(got, expect, "{cmp}");
        }
    }

    #[test]
    fn query_rejects_kind_mismatch_at_construction() {
        let err =
            FilterQuery::new(int_schema(), vec![Predicate::new(0, Comparator::Gt, Value::text("7"))]).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }

    #[test]
    fn query_rejects_empty_and_bad_column() {
        assert!(FilterQuery::new(int_schema(), vec![]).is_err());
        assert!(FilterQuery::new(int_schema(), vec![Predicate::new(3, Comparator::Gt, Value::Integer(1))]).is_err());
    }

    #[test]
    fn query_assigns_ids_in_user_order() {
        let q = FilterQuery::new(
            int_schema(),
            vec![
                Predicate::new(0, Comparator::Gt, Value::Integer(1)),
                Predicate::new(0, Comparator::Lt, Value::Integer(9)),
                Predicate::new(0, Comparator::Ne, Value::Integer(5)),
            ],
        )
        .unwrap();
        let ids: Vec<usize> = q.predicates().iter().map(Predicate::id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn naive_conjunction_examples() {
        let q = FilterQuery::new(
            int_schema(),
            vec![
                Predicate::new(0, Comparator::Gt, Value::Integer(1)),
                Predicate::new(0, Comparator::Lt, Value::Integer(9)),
            ],
        )
        .unwrap();
        assert!(q.naive_conjunction(&Record::new(vec![Value::Integer(5)])));
        assert!(!q.naive_conjunction(&Record::new(vec![Value::Integer(10)])));
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(Schema::of(&[]).is_err());
        assert!(Schema::of(&[("a", ValueKind::Integer), ("a", ValueKind::Text)]).is_err());
    }

    #[test]
    fn schema_check_detects_nonconforming_records() {
        let s = Schema::of(&[("a", ValueKind::Integer), ("b", ValueKind::Date)]).unwrap();
        assert!(s.check(&Record::new(vec![Value::Integer(1), Value::Date(3)])).is_ok());
        assert!(s.check(&Record::new(vec![Value::Integer(1)])).is_err());
        assert!(s.check(&Record::new(vec![Value::Date(1), Value::Date(3)])).is_err());
    }

    #[test]
    fn padding_does_not_change_verdicts() {
        let p = Predicate::new(0, Comparator::Ge, Value::Integer(3));
        let padded = p.clone().with_padding(500);
        for x in 0..6 {
            let r = Record::new(vec![Value::Integer(x)]);
            assert_eq!(p.evaluate(&r), padded.evaluate(&r));
        }
    }
}
