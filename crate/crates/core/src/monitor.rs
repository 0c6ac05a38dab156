//! Systematic row sampling and per-predicate measurement.
//!
//! One row in every `collect_rate` is monitored: all predicates are evaluated
//! in user order without short-circuiting and each evaluation is timed. The
//! results accumulate in a task-local [`EpochStats`].

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{FilterQuery, Record};

pub const DEFAULT_COLLECT_RATE: u64 = 1_000;
pub const DEFAULT_CALCULATE_RATE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorConfig {
    collect_rate: u64,
    calculate_rate: u64,
}

impl MonitorConfig {
    pub fn new(collect_rate: u64, calculate_rate: u64) -> Result<Self> {
        if collect_rate == 0 {
            return Err(Error::Config("collectRate must be at least 1".into()));
        }
        if calculate_rate == 0 {
            return Err(Error::Config("calculateRate must be at least 1".into()));
        }
        Ok(MonitorConfig {
            collect_rate,
            calculate_rate,
        })
    }

    pub fn collect_rate(&self) -> u64 {
        self.collect_rate
    }

    pub fn calculate_rate(&self) -> u64 {
        self.calculate_rate
    }
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            collect_rate: DEFAULT_COLLECT_RATE,
            calculate_rate: DEFAULT_CALCULATE_RATE,
        }
    }
}

#[inline]
pub fn should_monitor(task_row_index: u64, config: &MonitorConfig) -> bool {
    task_row_index.is_multiple_of(config.collect_rate)
}

/// Verdicts and timings of one fully evaluated row, indexed by predicate id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitoredOutcome {
    pub pass_flags: Vec<bool>,
    pub per_predicate_nanos: Vec<u64>,
}

impl MonitoredOutcome {
    pub fn with_len(n: usize) -> Self {
        MonitoredOutcome {
            pass_flags: vec![false; n],
            per_predicate_nanos: vec![0; n],
        }
    }

    pub fn passed(&self) -> bool {
        self.pass_flags.iter().all(|&p| p)
    }
}

pub fn evaluate_monitored(query: &FilterQuery, record: &Record) -> MonitoredOutcome {
    let mut out = MonitoredOutcome::with_len(query.len());
    evaluate_monitored_into(query, record, &mut out);
    out
}

/// Same as [`evaluate_monitored`] but reuses `out`. Takes n+1 clock readings:
/// the duration of predicate i is the gap between readings i and i+1.
pub fn evaluate_monitored_into(query: &FilterQuery, record: &Record, out: &mut MonitoredOutcome) {
    let n = query.len();
    out.pass_flags.resize(n, false);
    out.per_predicate_nanos.resize(n, 0);
    let mut last = Instant::now();
    for (i, p) in query.predicates().iter().enumerate() {
        let pass = p.evaluate(record);
        let now = Instant::now();
        out.pass_flags[i] = pass;
        out.per_predicate_nanos[i] = now.duration_since(last).as_nanos() as u64;
        last = now;
    }
}

/// Per-epoch accumulators, indexed by predicate id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochStats {
    pub num_cut: Vec<u64>,
    pub cost_nanos: Vec<u64>,
    pub monitored: u64,
    pub processed: u64,
}

impl EpochStats {
    pub fn new(n: usize) -> Self {
        EpochStats {
            num_cut: vec![0; n],
            cost_nanos: vec![0; n],
            monitored: 0,
            processed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.num_cut.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_cut.is_empty()
    }

    pub fn accumulate(&mut self, outcome: &MonitoredOutcome) -> Result<()> {
        let n = self.num_cut.len();
        for actual in [outcome.pass_flags.len(), outcome.per_predicate_nanos.len()] {
            if actual != n {
                return Err(Error::LengthMismatch { expected: n, actual });
            }
        }
        self.monitored += 1;
        for i in 0..n {
            self.cost_nanos[i] += outcome.per_predicate_nanos[i];
            if !outcome.pass_flags[i] {
                self.num_cut[i] += 1;
            }
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.num_cut.iter_mut().for_each(|c| *c = 0);
        self.cost_nanos.iter_mut().for_each(|c| *c = 0);
        self.monitored = 0;
        self.processed = 0;
    }

    /// True when no accumulator is smaller than in `earlier`.
    pub fn dominates(&self, earlier: &EpochStats) -> bool {
        self.monitored >= earlier.monitored
            && self.processed >= earlier.processed
            && self.num_cut.iter().zip(&earlier.num_cut).all(|(a, b)| a >= b)
            && self.cost_nanos.iter().zip(&earlier.cost_nanos).all(|(a, b)| a >= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Comparator, Predicate, Schema, Value, ValueKind};

    fn outcome(flags: &[bool], nanos: &[u64]) -> MonitoredOutcome {
        MonitoredOutcome {
            pass_flags: flags.to_vec(),
            per_predicate_nanos: nanos.to_vec(),
        }
    }

    fn four_predicate_query() -> FilterQuery {
        let schema = Schema::of(&[("x", ValueKind::Integer)]).unwrap();
        FilterQuery::new(
            schema,
            vec![
                Predicate::new(0, Comparator::Gt, Value::Integer(0)),
                Predicate::new(0, Comparator::Lt, Value::Integer(100)),
                Predicate::new(0, Comparator::Ne, Value::Integer(50)),
                Predicate::new(0, Comparator::Ge, Value::Integer(10)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sampling_cadence() {
        let cfg = MonitorConfig::new(1000, 10).unwrap();
        assert!(should_monitor(0, &cfg));
        assert!(!should_monitor(999, &cfg));
        assert!(should_monitor(1000, &cfg));
        assert!(should_monitor(2000, &cfg));
        assert!(!should_monitor(2001, &cfg));
    }

    #[test]
    fn config_validation_and_defaults() {
        assert!(MonitorConfig::new(0, 1).is_err());
        assert!(MonitorConfig::new(1, 0).is_err());
        let d = MonitorConfig::default();
        assert_eq!((d.collect_rate(), d.calculate_rate()), (1000, 1_000_000));
    }

    #[test]
    fn monitored_evaluation_does_not_short_circuit() {
        let q = four_predicate_query();
        let o = evaluate_monitored(&q, &Record::new(vec![Value::Integer(50)]));
        assert_eq!(o.pass_flags, vec![true, true, false, true]);
        assert_eq!(o.per_predicate_nanos.len(), 4);
        assert!(!o.passed());

        let o = evaluate_monitored(&q, &Record::new(vec![Value::Integer(-5)]));
        assert_eq!(o.pass_flags, vec![false, true, true, false]);
        assert_eq!(o.per_predicate_nanos.len(), 4);
    }

    #[test]
    fn failing_all_still_times_every_predicate() {
        let schema = Schema::of(&[("x", ValueKind::Integer)]).unwrap();
        let q = FilterQuery::new(
            schema,
            vec![
                Predicate::new(0, Comparator::Gt, Value::Integer(10)).with_padding(2000),
                Predicate::new(0, Comparator::Lt, Value::Integer(-10)).with_padding(2000),
            ],
        )
        .unwrap();
        let o = evaluate_monitored(&q, &Record::new(vec![Value::Integer(0)]));
        assert_eq!(o.pass_flags, vec![false, false]);
        assert!(o.per_predicate_nanos.iter().all(|&t| t > 0));
    }

    #[test]
    fn single_predicate_pass() {
        let schema = Schema::of(&[("x", ValueKind::Integer)]).unwrap();
        let q = FilterQuery::new(schema, vec![Predicate::new(0, Comparator::Gt, Value::Integer(1))]).unwrap();
        let o = evaluate_monitored(&q, &Record::new(vec![Value::Integer(2)]));
        assert_eq!(o.pass_flags, vec![true]);
        assert!(o.passed());
    }

    #[test]
    fn accumulate_counts_cuts_and_costs() {
        let mut s = EpochStats::new(2);
        s.accumulate(&outcome(&[true, false], &[3, 4])).unwrap();
        assert_eq!(s.num_cut, vec![0, 1]);
        assert_eq!(s.monitored, 1);
        s.accumulate(&outcome(&[true, false], &[5, 6])).unwrap();
        assert_eq!(s.num_cut, vec![0, 2]);
        assert_eq!(s.monitored, 2);
        assert_eq!(s.cost_nanos, vec![8, 10]);
    }

    #[test]
    fn accumulate_rejects_length_mismatch() {
        let mut s = EpochStats::new(3);
        let err = s.accumulate(&outcome(&[true, false], &[1, 1])).unwrap_err();
        assert_eq!(err, Error::LengthMismatch { expected: 3, actual: 2 });
        assert_eq!(s, EpochStats::new(3));
    }

    #[test]
    fn reset_is_idempotent() {
        let mut s = EpochStats::new(2);
        s.accumulate(&outcome(&[false, false], &[7, 9])).unwrap();
        s.processed = 12;
        s.reset();
        assert_eq!(s, EpochStats::new(2));
        s.reset();
        assert_eq!(s, EpochStats::new(2));
    }

    #[test]
    fn dominance() {
        let mut a = EpochStats::new(2);
        let before = a.clone();
        a.accumulate(&outcome(&[false, true], &[1, 1])).unwrap();
        assert!(a.dominates(&before));
        assert!(!before.dominates(&a));
    }
}
