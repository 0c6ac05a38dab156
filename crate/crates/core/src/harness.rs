//! Experiment driver: static-vs-adaptive sweeps, parameter sweeps, drift
//! response, and threshold derivation for target pass fractions.
//!
//! Evaluation counts are the primary metric since they do not depend on
//! timing noise; wall time is reported as the median over repetitions.

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::datagen::{self, DatasetSpec, Segment, TEXT_WIDTH};
use crate::error::{Error, Result};
use crate::model::{Comparator, FilterQuery, Partition, Predicate, Record, Schema, Value, ValueKind};
use crate::monitor::{evaluate_monitored, EpochStats, MonitorConfig};
use crate::operator::{run_partitioned, CommitRecord, OperatorMode, RunOptions, RunReport};
use crate::rank::{brute_force_best, MomentumConfig, Permutation};

pub const DESK_ROWS: u64 = 5_000_000;
pub const DESK_PARTITION_SIZE: usize = 250_000;
pub const DESK_WORKERS: usize = 1;
pub const DESK_TASKS: usize = 4;
pub const DESK_CALCULATE_RATE: u64 = 100_000;
pub const DESK_REPETITIONS: usize = 3;
/// Largest query accepted by the exhaustive static sweeps.
pub const MAX_SWEEP_PREDICATES: usize = 6;

/// Where an experiment's rows come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Generated(DatasetSpec),
    /// Rows read from a file. `segment_ends` are exclusive row positions;
    /// a single entry means one segment.
    Loaded {
        schema: Schema,
        segment_ends: Vec<u64>,
    },
}

impl DataSource {
    pub fn schema(&self) -> &Schema {
        match self {
            DataSource::Generated(d) => d.schema(),
            DataSource::Loaded { schema, .. } => schema,
        }
    }

    pub fn segment_ends(&self) -> Vec<u64> {
        match self {
            DataSource::Generated(d) => d.segment_ends(),
            DataSource::Loaded { segment_ends, .. } => segment_ends.clone(),
        }
    }

    pub fn total_rows(&self) -> u64 {
        self.segment_ends().last().copied().unwrap_or(0)
    }
}

impl From<DatasetSpec> for DataSource {
    fn from(d: DatasetSpec) -> Self {
        DataSource::Generated(d)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub query: FilterQuery,
    pub workers: usize,
    pub tasks_per_worker: usize,
    pub partition_size: usize,
    pub monitor: MonitorConfig,
    pub momentum: MomentumConfig,
    pub repetitions: usize,
}

impl ExperimentSpec {
    /// Desk-scale defaults: 1 worker x 4 tasks, 250k-row partitions, one
    /// sample per 1000 rows, re-ranking every 100k task rows, momentum 0.3.
    pub fn desk(data: impl Into<DataSource>, query: FilterQuery) -> Self {
        ExperimentSpec {
            data: data.into(),
            query,
            workers: DESK_WORKERS,
            tasks_per_worker: DESK_TASKS,
            partition_size: DESK_PARTITION_SIZE,
            monitor: MonitorConfig::new(crate::monitor::DEFAULT_COLLECT_RATE, DESK_CALCULATE_RATE)
                .expect("valid desk config"),
            momentum: MomentumConfig::default(),
            repetitions: DESK_REPETITIONS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.workers == 0 || self.tasks_per_worker == 0 || self.partition_size == 0 {
            return Err(Error::Config(
                "workers, tasks and partition size must be at least 1".into(),
            ));
        }
        if self.query.schema() != self.data.schema() {
            return Err(Error::Schema("query schema differs from the dataset schema".into()));
        }
        Ok(())
    }
}

/// An experiment with its data materialized in memory.
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub partitions: Vec<Partition>,
}

/// Outcome of one mode: median wall time over the repetitions and the full
/// report of the first repetition.
#[derive(Debug, Clone)]
pub struct ModeResult {
    pub label: String,
    pub median_wall_nanos: u64,
    pub report: RunReport,
}

impl ModeResult {
    pub fn total_eval_count(&self) -> u64 {
        self.report.total_eval_count()
    }

    pub fn rows_out(&self) -> u64 {
        self.report.rows_out
    }
}

impl Experiment {
    pub fn prepare(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let DataSource::Generated(dataset) = &spec.data else {
            return Err(Error::Config("loaded data must be passed to `from_records`".into()));
        };
        let partitions = datagen::generate_partitions(dataset, spec.partition_size)?;
        Ok(Experiment { spec, partitions })
    }

    /// Uses already loaded records instead of generating them.
    pub fn from_records(spec: ExperimentSpec, records: Vec<Record>) -> Result<Self> {
        spec.validate()?;
        if records.len() as u64 != spec.data.total_rows() {
            return Err(Error::Config(format!(
                "{} rows given, the data source describes {}",
                records.len(),
                spec.data.total_rows()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            spec.query.schema().check(r).map_err(|e| Error::Format {
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        let partitions = datagen::partition(records, spec.partition_size)?;
        Ok(Experiment { spec, partitions })
    }

    pub fn rows(&self) -> u64 {
        self.partitions.iter().map(|p| p.len() as u64).sum()
    }

    pub fn options(&self, mode: OperatorMode) -> RunOptions {
        RunOptions {
            label: None,
            mode,
            workers: self.spec.workers,
            tasks_per_worker: self.spec.tasks_per_worker,
            monitor: self.spec.monitor,
            momentum: self.spec.momentum,
            collect_output: false,
            validate_reads: false,
            segment_ends: self.spec.data.segment_ends(),
        }
    }

    pub fn run_mode(&self, mode: OperatorMode) -> Result<ModeResult> {
        self.run_with(&self.options(mode))
    }

    pub fn run_with(&self, options: &RunOptions) -> Result<ModeResult> {
        let mut out = self.run_interleaved(std::slice::from_ref(options))?;
        Ok(out.pop().expect("one result per option set"))
    }

    /// Runs every option set `repetitions` times, round-robin, after one
    /// untimed warm-up pass over all of them. Interleaving spreads slow drift
    /// in machine speed evenly across the compared modes. Counts come from the
    /// first timed repetition.
    pub fn run_interleaved(&self, options: &[RunOptions]) -> Result<Vec<ModeResult>> {
        for o in options {
            run_partitioned(&self.spec.query, &self.partitions, o)?;
        }
        let mut firsts: Vec<Option<RunReport>> = vec![None; options.len()];
        let mut walls = vec![Vec::with_capacity(self.spec.repetitions); options.len()];
        for round in 0..self.spec.repetitions {
            for k in 0..options.len() {
                // rotate the starting mode so no mode always runs first
                let i = (k + round) % options.len();
                let report = run_partitioned(&self.spec.query, &self.partitions, &options[i])?;
                walls[i].push(report.wall_nanos);
                firsts[i].get_or_insert(report);
            }
        }
        Ok(firsts
            .into_iter()
            .zip(walls.iter_mut())
            .map(|(report, walls)| {
                let report = report.expect("at least one repetition");
                ModeResult {
                    label: report.label.clone(),
                    median_wall_nanos: median(walls),
                    report,
                }
            })
            .collect())
    }

    /// Rows whose global position falls inside segment `index`.
    pub fn segment_records(&self, index: usize) -> impl Iterator<Item = &Record> {
        let ends = self.spec.data.segment_ends();
        let start = if index == 0 { 0 } else { ends[index - 1] };
        let end = ends[index];
        self.partitions.iter().flat_map(move |p| {
            p.records
                .iter()
                .enumerate()
                .filter(move |(j, _)| (start..end).contains(&(p.offset + *j as u64)))
                .map(|(_, r)| r)
        })
    }
}

pub fn median(values: &mut [u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    values.sort_unstable();
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2
    }
}

fn check_sweepable(query: &FilterQuery) -> Result<()> {
    if query.len() > MAX_SWEEP_PREDICATES {
        return Err(Error::Config(format!(
            "{} predicates give {}! static orders; the sweep is limited to {MAX_SWEEP_PREDICATES}",
            query.len(),
            query.len()
        )));
    }
    Ok(())
}

/// Every static order followed by one adaptive run.
pub fn sweep_permutations(exp: &Experiment) -> Result<Vec<ModeResult>> {
    check_sweepable(&exp.spec.query)?;
    let mut options: Vec<RunOptions> = Permutation::all(exp.spec.query.len())
        .map(|perm| exp.options(OperatorMode::Static(perm)))
        .collect();
    options.push(exp.options(OperatorMode::Adaptive));
    exp.run_interleaved(&options)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[ModeResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "medianWallNanos", "totalEvalCount", "rowsOut"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.median_wall_nanos.to_string(),
            r.total_eval_count().to_string(),
            r.rows_out().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    CollectRate,
    CalculateRate,
    Momentum,
}

impl Parameter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "collectRate" => Ok(Parameter::CollectRate),
            "calculateRate" => Ok(Parameter::CalculateRate),
            "momentum" => Ok(Parameter::Momentum),
            other => Err(Error::Config(format!(
                "unknown parameter `{other}` (expected collectRate, calculateRate or momentum)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Parameter::CollectRate => "collectRate",
            Parameter::CalculateRate => "calculateRate",
            Parameter::Momentum => "momentum",
        }
    }

    /// Applies `value` on top of `base`, validating it.
    pub fn apply(self, value: f64, base: &RunOptions) -> Result<RunOptions> {
        let mut opts = base.clone();
        let as_rate = |v: f64| -> Result<u64> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            Parameter::CollectRate => {
                opts.monitor = MonitorConfig::new(as_rate(value)?, base.monitor.calculate_rate())?;
            }
            Parameter::CalculateRate => {
                opts.monitor = MonitorConfig::new(base.monitor.collect_rate(), as_rate(value)?)?;
            }
            Parameter::Momentum => opts.momentum = MomentumConfig::new(value)?,
        }
        opts.label = Some(format!("{}={value}", self.name()));
        Ok(opts)
    }
}

/// One adaptive run per value; the other parameters keep the experiment's
/// settings. All values are validated before anything runs.
pub fn sweep_parameter(exp: &Experiment, parameter: Parameter, values: &[f64]) -> Result<Vec<(f64, ModeResult)>> {
    let base = exp.options(OperatorMode::Adaptive);
    let options = values
        .iter()
        .map(|&v| parameter.apply(v, &base).map(|o| (v, o)))
        .collect::<Result<Vec<_>>>()?;
    let (values, options): (Vec<f64>, Vec<RunOptions>) = options.into_iter().unzip();
    Ok(values.into_iter().zip(exp.run_interleaved(&options)?).collect())
}

pub fn write_parameter_csv<W: Write>(out: W, rows: &[(f64, ModeResult)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameterValue", "medianWallNanos", "totalEvalCount"])?;
    for (v, r) in rows {
        w.write_record([
            v.to_string(),
            r.median_wall_nanos.to_string(),
            r.total_eval_count().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `column > threshold`
    Above,
    /// `column < threshold`
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateTarget {
    pub column: String,
    pub direction: Direction,
    pub pass_fraction: f64,
    pub padding: u32,
}

impl PredicateTarget {
    pub fn new(column: &str, direction: Direction, pass_fraction: f64) -> Self {
        PredicateTarget {
            column: column.to_string(),
            direction,
            pass_fraction,
            padding: 0,
        }
    }

    pub fn padded(mut self, padding: u32) -> Self {
        self.padding = padding;
        self
    }
}

#[derive(Debug, Clone)]
pub struct DerivedQuery {
    pub query: FilterQuery,
    /// Pass fraction of each predicate under the first segment, after
    /// rounding thresholds to the column's value grid.
    pub expected_pass: Vec<f64>,
    /// Fraction of rows passing the whole conjunction.
    pub expected_overall: f64,
}

/// Builds one `>`/`<` predicate per target with threshold
/// `mean + stddev * z`, where `z` is the standard-normal quantile that gives
/// the target pass fraction under the first segment's distribution.
pub fn derive_thresholds(targets: &[PredicateTarget], dataset: &DatasetSpec) -> Result<DerivedQuery> {
    let schema = dataset.schema();
    let segment = &dataset.segments()[0];
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let mut predicates = Vec::with_capacity(targets.len());
    for t in targets {
        if !(t.pass_fraction > 0.0 && t.pass_fraction < 1.0) {
            return Err(Error::Config(format!(
                "target pass fraction {} for `{}` must lie strictly between 0 and 1",
                t.pass_fraction, t.column
            )));
        }
        let column = schema
            .index_of(&t.column)
            .ok_or_else(|| Error::Schema(format!("unknown column `{}`", t.column)))?;
        let spec = &segment.columns[column];
        let (comparator, z) = match t.direction {
            Direction::Above => (Comparator::Gt, unit.inverse_cdf(1.0 - t.pass_fraction)),
            Direction::Below => (Comparator::Lt, unit.inverse_cdf(t.pass_fraction)),
        };
        let cut = spec.mean + spec.stddev * z;
        let threshold = match spec.kind {
            ValueKind::Real => Value::Real(cut),
            kind => {
                // rounded values: `x > t` keeps draws >= t + 0.5, `x < t` keeps draws < t - 0.5
                let t_num = match t.direction {
                    Direction::Above => (cut - 0.5).round() as i64,
                    Direction::Below => (cut + 0.5).round() as i64,
                };
                grid_value(kind, t_num, dataset.base_date())
            }
        };
        predicates.push(Predicate::new(column, comparator, threshold).with_padding(t.padding));
    }
    let query = FilterQuery::new(schema.clone(), predicates)?;
    let (expected_pass, expected_overall) = analytic_pass_fractions(&query, segment, dataset.base_date())?;
    Ok(DerivedQuery {
        query,
        expected_pass,
        expected_overall,
    })
}

fn grid_value(kind: ValueKind, n: i64, base_date: i64) -> Value {
    match kind {
        ValueKind::Integer => Value::Integer(n),
        ValueKind::Date => Value::Date(base_date + n),
        ValueKind::Text => Value::text(datagen::render_text(n)),
        ValueKind::Real => Value::Real(n as f64),
    }
}

/// Maps a normal draw to the value the generator would emit.
fn value_from_draw(kind: ValueKind, x: f64, base_date: i64) -> Value {
    match kind {
        ValueKind::Real => Value::Real(x),
        kind => grid_value(kind, x.round() as i64, base_date),
    }
}

/// Draw-space points where a predicate's verdict can change.
fn cut_points(p: &Predicate, kind: ValueKind, base_date: i64) -> Result<Vec<f64>> {
    let t = match p.threshold() {
        Value::Real(x) => return Ok(vec![*x]),
        Value::Integer(x) => *x as f64,
        Value::Date(d) => (d - base_date) as f64,
        Value::Text(bytes) => {
            let s = std::str::from_utf8(bytes)
                .ok()
                .filter(|s| s.len() == TEXT_WIDTH && s.bytes().all(|b| b.is_ascii_digit()));
            s.and_then(|s| s.parse::<i64>().ok()).ok_or_else(|| {
                Error::Config(format!(
                    "text threshold must be a {TEXT_WIDTH}-digit zero-padded number for analytic pass fractions"
                ))
            })? as f64
        }
    };
    debug_assert_ne!(kind, ValueKind::Real);
    Ok(vec![t - 0.5, t + 0.5])
}

/// Probability that a row of `segment` passes each predicate, and the whole
/// conjunction. Columns are independent; predicates on the same column are
/// combined exactly by splitting the draw axis at every cut point.
pub fn analytic_pass_fractions(query: &FilterQuery, segment: &Segment, base_date: i64) -> Result<(Vec<f64>, f64)> {
    let mut per_predicate = Vec::with_capacity(query.len());
    for p in query.predicates() {
        per_predicate.push(column_pass_probability(&[p], segment, base_date)?);
    }
    let mut overall = 1.0;
    for column in 0..query.schema().len() {
        let on_column: Vec<&Predicate> = query.predicates().iter().filter(|p| p.column() == column).collect();
        if !on_column.is_empty() {
            overall *= column_pass_probability(&on_column, segment, base_date)?;
        }
    }
    Ok((per_predicate, overall))
}

fn column_pass_probability(predicates: &[&Predicate], segment: &Segment, base_date: i64) -> Result<f64> {
    let column = predicates[0].column();
    let spec = &segment.columns[column];
    let dist = Normal::new(spec.mean, spec.stddev).map_err(|e| Error::Config(e.to_string()))?;
    let mut cuts = Vec::new();
    for p in predicates {
        cuts.extend(cut_points(p, spec.kind, base_date)?);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let holds = |x: f64| {
        let v = value_from_draw(spec.kind, x, base_date);
        predicates.iter().all(|p| {
            v.compare(p.threshold())
                .map(|o| p.comparator().holds(o))
                .unwrap_or(false)
        })
    };
    let mut total = 0.0;
    let mut lo = f64::NEG_INFINITY;
    for &hi in cuts.iter().chain(std::iter::once(&f64::INFINITY)) {
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo + hi) / 2.0,
            (false, true) => hi - 1.0,
            (true, false) => lo + 1.0,
            (false, false) => spec.mean,
        };
        if holds(probe) {
            total += dist.cdf(hi) - dist.cdf(lo);
        }
        lo = hi;
    }
    Ok(total)
}

/// Fully evaluates every `step`-th row and accumulates the statistics.
pub fn measure_stats<'a>(query: &FilterQuery, rows: impl Iterator<Item = &'a Record>, step: usize) -> EpochStats {
    let mut stats = EpochStats::new(query.len());
    for r in rows.step_by(step.max(1)) {
        stats
            .accumulate(&evaluate_monitored(query, r))
            .expect("outcome sized to the query");
    }
    stats
}

/// Expected-cost-minimizing order for measured statistics.
pub fn oracle_permutation(stats: &EpochStats) -> Result<Permutation> {
    if stats.monitored == 0 {
        return Err(Error::NoSamples);
    }
    let m = stats.monitored as f64;
    let avg: Vec<f64> = stats.cost_nanos.iter().map(|&c| c as f64 / m).collect();
    let s = crate::rank::compute_selectivities(stats)?;
    brute_force_best(&avg, &s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adoption {
    pub worker_id: usize,
    /// Segment whose oracle order is looked for.
    pub segment: usize,
    /// Commits made at or past the segment start, before and including the
    /// one that installed the oracle order.
    pub commits_until_adopted: Option<usize>,
    pub adopted_epoch: Option<u64>,
    pub first_epoch_in_segment: Option<u64>,
}

/// Finds the first commit at or after `start` that installs `oracle`.
pub fn adoption(trace: &[CommitRecord], start: u64, oracle: &Permutation, segment: usize) -> Adoption {
    let first = trace.iter().position(|c| c.position >= start);
    let mut out = Adoption {
        worker_id: trace.first().map(|c| c.worker_id).unwrap_or(0),
        segment,
        commits_until_adopted: None,
        adopted_epoch: None,
        first_epoch_in_segment: first.map(|i| trace[i].epoch_id),
    };
    if let Some(k0) = first {
        if let Some(k) = trace[k0..].iter().position(|c| &c.permutation == oracle) {
            out.commits_until_adopted = Some(k + 1);
            out.adopted_epoch = Some(trace[k0 + k].epoch_id);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DriftReport {
    pub results: Vec<ModeResult>,
    pub segment_stats: Vec<EpochStats>,
    pub segment_oracles: Vec<Permutation>,
    /// One entry per (segment after the first, worker).
    pub adoptions: Vec<Adoption>,
}

impl DriftReport {
    pub fn adaptive(&self) -> &ModeResult {
        self.results.last().expect("adaptive run is always present")
    }

    pub fn statics(&self) -> &[ModeResult] {
        &self.results[..self.results.len() - 1]
    }
}

/// Rows sampled per segment when measuring the oracle statistics.
const ORACLE_SAMPLES: u64 = 50_000;

pub fn drift_experiment(exp: &Experiment) -> Result<DriftReport> {
    let ends = exp.spec.data.segment_ends();
    let segments = ends.len();
    if segments < 2 {
        return Err(Error::Config("the drift experiment needs at least two segments".into()));
    }
    let results = sweep_permutations(exp)?;

    let mut segment_stats = Vec::with_capacity(segments);
    let mut segment_oracles = Vec::with_capacity(segments);
    let mut start = 0;
    for (i, &end) in ends.iter().enumerate() {
        let step = ((end - start) / ORACLE_SAMPLES).max(1) as usize;
        let stats = measure_stats(&exp.spec.query, exp.segment_records(i), step);
        segment_oracles.push(oracle_permutation(&stats)?);
        segment_stats.push(stats);
        start = end;
    }

    let adaptive = results.last().expect("adaptive run");
    let mut adoptions = Vec::new();
    for segment in 1..segments {
        for trace in &adaptive.report.traces {
            adoptions.push(adoption(trace, ends[segment - 1], &segment_oracles[segment], segment));
        }
    }
    Ok(DriftReport {
        results,
        segment_stats,
        segment_oracles,
        adoptions,
    })
}

pub fn write_drift_csv<W: Write>(out: W, report: &DriftReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let segments = report.segment_oracles.len();
    let mut header = vec![
        "label".to_string(),
        "medianWallNanos".into(),
        "totalEvalCount".into(),
        "rowsOut".into(),
    ];
    header.extend((0..segments).map(|s| format!("segment{s}EvalCount")));
    w.write_record(&header)?;
    for r in &report.results {
        let mut row = vec![
            r.label.clone(),
            r.median_wall_nanos.to_string(),
            r.total_eval_count().to_string(),
            r.rows_out().to_string(),
        ];
        row.extend((0..segments).map(|s| r.report.segment_total(s).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

/// One row per commit: worker, epoch, task, position, sample count and the
/// vectors (space-separated) used for the new order.
pub fn write_trace_csv<'a, W: Write>(
    out: W,
    commits: impl IntoIterator<Item = &'a CommitRecord>,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "workerId",
        "epochId",
        "taskId",
        "position",
        "monitored",
        "selectivities",
        "normalizedCosts",
        "adjustedRanks",
        "permutation",
    ])?;
    for c in commits {
        w.write_record([
            c.worker_id.to_string(),
            c.epoch_id.to_string(),
            c.task_id.to_string(),
            c.position.to_string(),
            c.monitored.to_string(),
            join_floats(&c.selectivities),
            join_floats(&c.normalized_costs),
            join_floats(&c.adjusted_ranks),
            c.permutation.label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ready-made datasets and queries for the CLI and the acceptance suite.
pub mod presets {
    use super::*;
    use crate::datagen::ColumnSpec;

    fn columns(date_mean: f64, text_mean: f64) -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::new("d", ValueKind::Date, date_mean, 365.0),
            ColumnSpec::new("i", ValueKind::Integer, 0.0, 1000.0),
            ColumnSpec::new("t", ValueKind::Text, text_mean, 10_000.0),
        ]
    }

    /// Stationary date/integer/string dataset.
    pub fn stationary_dataset(rows: u64, seed: u64) -> DatasetSpec {
        DatasetSpec::new(
            vec![Segment {
                rows,
                columns: columns(0.0, 500_000.0),
            }],
            seed,
        )
        .expect("valid preset")
    }

    /// Four predicates, two on the integer column and one each on the date
    /// and string columns, passing about 4.51% of rows overall. In user
    /// order the integer predicates (95% pass each) come first; the date
    /// (10%) and string (~50%) predicates are the selective ones.
    pub fn sweep_targets() -> Vec<PredicateTarget> {
        vec![
            PredicateTarget::new("i", Direction::Above, 0.95).padded(60),
            PredicateTarget::new("i", Direction::Below, 0.95).padded(60),
            PredicateTarget::new("d", Direction::Above, 0.10).padded(40),
            PredicateTarget::new("t", Direction::Below, 0.0451 / (0.9 * 0.10)).padded(40),
        ]
    }

    /// Loosened variant passing about 16.14% of rows.
    pub fn sensitivity_targets() -> Vec<PredicateTarget> {
        vec![
            PredicateTarget::new("i", Direction::Above, 0.97).padded(60),
            PredicateTarget::new("i", Direction::Below, 0.97).padded(60),
            PredicateTarget::new("d", Direction::Above, 0.30).padded(40),
            PredicateTarget::new("t", Direction::Below, 0.1614 / (0.94 * 0.30)).padded(40),
        ]
    }

    /// Pass fractions used by the drift dataset under its first segment.
    pub const DRIFT_FIRST: [f64; 4] = [0.97, 0.10, 0.50, 0.85];

    /// Two segments of `rows_per_segment` rows. In the first the date
    /// predicate is the most selective (10%) and the string predicate passes
    /// half; in the second the two swap.
    pub fn drift(rows_per_segment: u64, seed: u64) -> (DatasetSpec, FilterQuery) {
        let first = Segment {
            rows: rows_per_segment,
            columns: columns(0.0, 500_000.0),
        };
        let base = DatasetSpec::new(vec![first.clone()], seed).expect("valid preset");
        let targets = [
            PredicateTarget::new("i", Direction::Above, DRIFT_FIRST[0]).padded(50),
            PredicateTarget::new("d", Direction::Above, DRIFT_FIRST[1]).padded(50),
            PredicateTarget::new("t", Direction::Below, DRIFT_FIRST[2]).padded(50),
            PredicateTarget::new("i", Direction::Below, DRIFT_FIRST[3]).padded(50),
        ];
        let derived = derive_thresholds(&targets, &base).expect("feasible targets");

        // shift means so the date predicate passes ~50% and the string one ~10%
        let unit = Normal::new(0.0, 1.0).expect("standard normal");
        let z90 = unit.inverse_cdf(0.9);
        let second = Segment {
            rows: rows_per_segment,
            columns: columns(365.0 * z90, 500_000.0 + 10_000.0 * z90),
        };
        let dataset = DatasetSpec::new(vec![first, second], seed).expect("valid preset");
        (dataset, derived.query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ColumnSpec;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [5, 1, 3]), 3);
        assert_eq!(median(&mut [4, 1, 3, 2]), 2);
        assert_eq!(median(&mut []), 0);
    }

    #[test]
    fn parameter_validation() {
        let base = RunOptions::default();
        assert!(Parameter::CollectRate.apply(0.0, &base).is_err());
        assert!(Parameter::CollectRate.apply(2.5, &base).is_err());
        assert!(Parameter::Momentum.apply(1.5, &base).is_err());
        let o = Parameter::CalculateRate.apply(500.0, &base).unwrap();
        assert_eq!(o.monitor.calculate_rate(), 500);
        assert_eq!(o.monitor.collect_rate(), base.monitor.collect_rate());
        assert!(Parameter::parse("collectrate").is_err());
        assert_eq!(Parameter::parse("momentum").unwrap(), Parameter::Momentum);
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        let ds = presets::stationary_dataset(10, 1);
        for p in [0.0, 1.0, -0.1] {
            let err = derive_thresholds(&[PredicateTarget::new("i", Direction::Above, p)], &ds);
            assert!(matches!(err, Err(Error::Config(_))), "{p}");
        }
        assert!(derive_thresholds(&[PredicateTarget::new("zz", Direction::Above, 0.5)], &ds).is_err());
    }

    #[test]
    fn half_targets_multiply() {
        let ds = DatasetSpec::new(
            vec![Segment {
                rows: 10,
                columns: vec![
                    ColumnSpec::new("a", ValueKind::Real, 0.0, 1.0),
                    ColumnSpec::new("b", ValueKind::Real, 3.0, 2.0),
                    ColumnSpec::new("c", ValueKind::Real, -1.0, 0.5),
                    ColumnSpec::new("e", ValueKind::Real, 10.0, 4.0),
                ],
            }],
            1,
        )
        .unwrap();
        let targets: Vec<_> = ["a", "b", "c", "e"]
            .iter()
            .map(|c| PredicateTarget::new(c, Direction::Above, 0.5))
            .collect();
        let d = derive_thresholds(&targets, &ds).unwrap();
        assert!((d.expected_overall - 0.0625).abs() < 1e-12);
        assert_eq!(d.query.predicates()[1].threshold(), &Value::Real(3.0));
    }

    #[test]
    fn same_column_predicates_combine_as_an_interval() {
        let ds = presets::stationary_dataset(10, 1);
        let targets = [
            PredicateTarget::new("i", Direction::Above, 0.95),
            PredicateTarget::new("i", Direction::Below, 0.95),
        ];
        let d = derive_thresholds(&targets, &ds).unwrap();
        assert!((d.expected_overall - 0.90).abs() < 1e-3, "{}", d.expected_overall);
    }

    #[test]
    fn sweep_guard() {
        let ds = presets::stationary_dataset(10, 1);
        let targets: Vec<_> = (0..7)
            .map(|_| PredicateTarget::new("i", Direction::Above, 0.5))
            .collect();
        let q = derive_thresholds(&targets, &ds).unwrap().query;
        let exp = Experiment::prepare(ExperimentSpec::desk(ds, q)).unwrap();
        assert!(matches!(sweep_permutations(&exp), Err(Error::Config(_))));
    }

    #[test]
    fn adoption_counts_from_first_commit_in_segment() {
        let rec = |epoch: u64, position: u64, order: Vec<usize>| CommitRecord {
            worker_id: 0,
            epoch_id: epoch,
            task_id: 0,
            position,
            monitored: 1,
            selectivities: vec![],
            normalized_costs: vec![],
            adjusted_ranks: vec![],
            permutation: Permutation::new(order).unwrap(),
        };
        let trace = vec![
            rec(1, 50, vec![1, 0]),
            rec(2, 120, vec![0, 1]),
            rec(3, 90, vec![0, 1]),
            rec(4, 150, vec![1, 0]),
            rec(5, 170, vec![1, 0]),
        ];
        let oracle = Permutation::new(vec![1, 0]).unwrap();
        let a = adoption(&trace, 100, &oracle, 1);
        assert_eq!(a.first_epoch_in_segment, Some(2));
        assert_eq!(a.commits_until_adopted, Some(3));
        assert_eq!(a.adopted_epoch, Some(4));
        let none = adoption(&trace, 1000, &oracle, 1);
        assert_eq!(none.commits_until_adopted, None);
    }
}
