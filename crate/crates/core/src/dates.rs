//! Day-number conversions for date values.

use chrono::NaiveDate;

use crate::error::{Error, Result};

fn unix_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

/// Parses `YYYY-MM-DD` into days since 1970-01-01.
pub fn parse_days(s: &str) -> Result<i64> {
    let date =
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Schema(format!("bad date `{s}`: {e}")))?;
    Ok(date.signed_duration_since(unix_epoch()).num_days())
}

pub fn format_days(days: i64) -> String {
    unix_epoch()
        .checked_add_signed(chrono::Duration::days(days))
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| format!("{days}d"))
}
