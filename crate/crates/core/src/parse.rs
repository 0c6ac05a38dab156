//! Text form of a filter query: `col OP literal` clauses joined by `&&`.
//!
//! Literals are integers, reals, ISO dates (`YYYY-MM-DD`) or single-quoted
//! strings. The literal is interpreted according to the column's kind.

use crate::dates;
use crate::error::{Error, Result};
use crate::model::{Comparator, FilterQuery, Predicate, Schema, Value, ValueKind};

pub fn parse_query(text: &str, schema: &Schema) -> Result<FilterQuery> {
    let clauses = split_clauses(text)?;
    let mut predicates = Vec::with_capacity(clauses.len());
    for (i, clause) in clauses.iter().enumerate() {
        predicates.push(parse_clause(i, clause, schema)?);
    }
    FilterQuery::new(schema.clone(), predicates)
}

fn split_clauses(text: &str) -> Result<Vec<String>> {
    let mut clauses = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' => {
                in_quote = !in_quote;
                current.push(c);
            }
            '&' if !in_quote && chars.peek() == Some(&'&') => {
                chars.next();
                clauses.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    if in_quote {
        return Err(Error::Parse {
            clause: clauses.len(),
            message: "unterminated string literal".into(),
        });
    }
    clauses.push(current);
    for (i, c) in clauses.iter().enumerate() {
        if c.trim().is_empty() {
            return Err(Error::Parse {
                clause: i,
                message: "empty clause".into(),
            });
        }
    }
    Ok(clauses)
}

fn parse_clause(index: usize, clause: &str, schema: &Schema) -> Result<Predicate> {
    let err = |message: String| Error::Parse { clause: index, message };
    let clause = clause.trim();
    let name_end = clause
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(clause.len());
    let name = &clause[..name_end];
    if name.is_empty() {
        return Err(err(format!("expected a column name in `{clause}`")));
    }
    let column = schema
        .index_of(name)
        .ok_or_else(|| err(format!("unknown column `{name}`")))?;

    let rest = clause[name_end..].trim_start();
    let op_len = rest
        .find(|c: char| !matches!(c, '<' | '>' | '=' | '!'))
        .unwrap_or(rest.len());
    let comparator = Comparator::parse(&rest[..op_len])
        .ok_or_else(|| err(format!("expected a comparison operator in `{clause}`")))?;
    let literal = rest[op_len..].trim();
    if literal.is_empty() {
        return Err(err(format!("missing literal in `{clause}`")));
    }

    let kind = schema.columns()[column].kind;
    let threshold = parse_literal(literal, kind).map_err(err)?;
    Ok(Predicate::new(column, comparator, threshold))
}

fn parse_literal(literal: &str, kind: ValueKind) -> std::result::Result<Value, String> {
    match kind {
        ValueKind::Integer => literal
            .parse::<i64>()
            .map(Value::Integer)
            .map_err(|_| format!("`{literal}` is not an integer")),
        ValueKind::Real => literal
            .parse::<f64>()
            .map(Value::Real)
            .map_err(|_| format!("`{literal}` is not a number")),
        ValueKind::Date => dates::parse_days(literal.trim_matches('\''))
            .map(Value::Date)
            .map_err(|e| e.to_string()),
        ValueKind::Text => {
            let inner = literal
                .strip_prefix('\'')
                .and_then(|s| s.strip_suffix('\''))
                .ok_or_else(|| format!("text literal `{literal}` must be single-quoted"))?;
            Ok(Value::text(inner))
        }
    }
}
