//! Flat `key = value` dataset description.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! base_date = 2000-01-01
//! query = i > 10 && d < 2001-01-01
//! padding = 50,50
//!
//! [segment]
//! rows = 1000000
//! column = d:date:0:365
//! column = i:integer:0:1000
//! ```
//!
//! Columns are `name:kind:mean:stddev`. Date means are offsets in days from
//! `base_date`. `query` and `padding` are optional defaults for the CLI.

use crate::datagen::{ColumnSpec, DatasetSpec, Segment};
use crate::dates;
use crate::error::{Error, Result};
use crate::model::ValueKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub dataset: DatasetSpec,
    pub query: Option<String>,
    pub padding: Option<Vec<u32>>,
}

pub fn parse_spec(text: &str) -> Result<SpecFile> {
    let mut seed = 0u64;
    let mut base_date = None;
    let mut query = None;
    let mut padding = None;
    let mut segments: Vec<Segment> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Format { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[segment]" {
            segments.push(Segment {
                rows: 0,
                columns: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        match (segments.last_mut(), key) {
            (None, "seed") => seed = value.parse().map_err(|_| err(format!("bad seed `{value}`")))?,
            (None, "base_date") => base_date = Some(dates::parse_days(value).map_err(|e| err(e.to_string()))?),
            (None, "query") => query = Some(value.to_string()),
            (None, "padding") => padding = Some(parse_list(value).map_err(err)?),
            (Some(seg), "rows") => seg.rows = value.parse().map_err(|_| err(format!("bad row count `{value}`")))?,
            (Some(seg), "column") => seg.columns.push(parse_column(value).map_err(err)?),
            (_, other) => return Err(err(format!("unexpected key `{other}`"))),
        }
    }

    let mut dataset = DatasetSpec::new(segments, seed)?;
    if let Some(d) = base_date {
        dataset = dataset.with_base_date(d);
    }
    Ok(SpecFile {
        dataset,
        query,
        padding,
    })
}

pub fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| format!("bad list element `{}`", v.trim()))
        })
        .collect()
}

fn parse_column(value: &str) -> std::result::Result<ColumnSpec, String> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    let [name, kind, mean, stddev] = parts[..] else {
        return Err(format!("column `{value}` is not `name:kind:mean:stddev`"));
    };
    Ok(ColumnSpec {
        name: name.to_string(),
        kind: ValueKind::parse(kind).map_err(|e| e.to_string())?,
        mean: mean.parse().map_err(|_| format!("bad mean `{mean}`"))?,
        stddev: stddev.parse().map_err(|_| format!("bad stddev `{stddev}`"))?,
    })
}

/// Text form accepted by [`parse_spec`].
pub fn render_spec(spec: &SpecFile) -> String {
    let mut out = format!(
        "seed = {}\nbase_date = {}\n",
        spec.dataset.seed(),
        dates::format_days(spec.dataset.base_date())
    );
    if let Some(q) = &spec.query {
        out.push_str(&format!("query = {q}\n"));
    }
    if let Some(p) = &spec.padding {
        let p: Vec<String> = p.iter().map(u32::to_string).collect();
        out.push_str(&format!("padding = {}\n", p.join(",")));
    }
    for seg in spec.dataset.segments() {
        out.push_str(&format!("\n[segment]\nrows = {}\n", seg.rows));
        for c in &seg.columns {
            out.push_str(&format!("column = {}:{}:{}:{}\n", c.name, c.kind, c.mean, c.stddev));
        }
    }
    out
}
