//! The adaptive filter operator.
//!
//! Each worker owns a [`RankState`] shared by its tasks. Tasks evaluate rows
//! under the worker's current permutation with short-circuiting, fully
//! evaluate every `collect_rate`-th row to gather statistics, and at each
//! epoch boundary try to commit new ranks. Only one task can hold the
//! committer lock at a time; a task that loses keeps its statistics and
//! retries at its next boundary.
//!
//! The permutation is published through an [`ArcSwap`], so readers never
//! block and always see a complete permutation. Tasks cache the permutation
//! and reload it only when the epoch counter moves.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use arc_swap::ArcSwap;
use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::model::{FilterQuery, Partition, Record};
use crate::monitor::{evaluate_monitored_into, EpochStats, MonitorConfig, MonitoredOutcome};
use crate::rank::{
    compute_ranks, compute_selectivities, is_bijection, normalize_costs, sort_permutation, update_adjusted_ranks,
    MomentumConfig, Permutation, RankVector,
};

/// One entry of a worker's commit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitRecord {
    pub worker_id: usize,
    pub epoch_id: u64,
    pub task_id: usize,
    /// Global row position the committing task had reached.
    pub position: u64,
    pub monitored: u64,
    pub selectivities: Vec<f64>,
    pub normalized_costs: Vec<f64>,
    pub adjusted_ranks: Vec<f64>,
    pub permutation: Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    Committed,
    Deferred,
    SkippedNoSamples,
}

#[derive(Debug, Default)]
struct Committer {
    adjusted: Option<RankVector>,
    trace: Vec<CommitRecord>,
}

/// Rank state shared by the tasks of one worker.
#[derive(Debug)]
pub struct RankState {
    worker_id: usize,
    n: usize,
    permutation: ArcSwap<Permutation>,
    epoch: AtomicU64,
    committer: Mutex<Committer>,
}

impl RankState {
    pub fn new(worker_id: usize, n: usize) -> Self {
        RankState {
            worker_id,
            n,
            permutation: ArcSwap::from_pointee(Permutation::identity(n)),
            epoch: AtomicU64::new(0),
            committer: Mutex::new(Committer::default()),
        }
    }

    pub fn worker_id(&self) -> usize {
        self.worker_id
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Wait-free snapshot of the current permutation. May lag a commit that
    /// is in progress.
    pub fn read_permutation(&self) -> Arc<Permutation> {
        self.permutation.load_full()
    }

    pub fn epoch_id(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    pub fn adjusted_ranks(&self) -> Option<RankVector> {
        self.committer.lock().adjusted.clone()
    }

    pub fn trace(&self) -> Vec<CommitRecord> {
        self.committer.lock().trace.clone()
    }

    fn into_trace(self) -> Vec<CommitRecord> {
        self.committer.into_inner().trace
    }
}

#[derive(Debug, Clone)]
pub enum OperatorMode {
    Adaptive,
    Static(Permutation),
}

impl OperatorMode {
    pub fn label(&self) -> String {
        match self {
            OperatorMode::Adaptive => "adaptive".to_string(),
            OperatorMode::Static(p) => format!("static:{}", p.label()),
        }
    }
}

/// Per-task counters that end up in the [`RunReport`].
#[derive(Debug, Clone, Default)]
pub struct TaskCounters {
    pub rows_in: u64,
    pub rows_out: u64,
    /// Flattened `[segment][predicate]` evaluation counts.
    pub eval_counts: Vec<u64>,
    pub monitored_rows: u64,
    pub monitored_nanos: u64,
    pub committed: u64,
    pub deferred: u64,
    pub skipped: u64,
    pub permutation_reads: u64,
    pub invalid_reads: u64,
    pub stats_regressions: u64,
}

/// State owned by one task for the lifetime of a run.
#[derive(Debug)]
pub struct TaskContext {
    task_id: usize,
    n: usize,
    row_index: u64,
    /// Task-local index of the next monitored row.
    next_sample: u64,
    /// `row_index` at the last commit attempt.
    last_attempt_row: u64,
    /// `row_index` up to which `stats.processed` has been brought up to date.
    processed_synced: u64,
    /// Next row that needs more than a plain evaluation: a sample or an
    /// epoch boundary.
    next_event: u64,
    stats: EpochStats,
    monitor: MonitorConfig,
    momentum: MomentumConfig,
    position: u64,
    segment_ends: Arc<[u64]>,
    segment: usize,
    segment_end: u64,
    outcome: MonitoredOutcome,
    cached_epoch: u64,
    cached: Arc<Permutation>,
    pending_snapshot: Option<EpochStats>,
    validate_reads: bool,
    counters: TaskCounters,
}

impl TaskContext {
    pub fn new(task_id: usize, query: &FilterQuery, monitor: MonitorConfig, momentum: MomentumConfig) -> Self {
        let n = query.len();
        TaskContext {
            task_id,
            n,
            row_index: 0,
            next_sample: 0,
            last_attempt_row: 0,
            processed_synced: 0,
            next_event: 0,
            stats: EpochStats::new(n),
            monitor,
            momentum,
            position: 0,
            segment_ends: Arc::from(Vec::new()),
            segment: 0,
            segment_end: u64::MAX,
            outcome: MonitoredOutcome::with_len(n),
            cached_epoch: 0,
            cached: Arc::new(Permutation::identity(n)),
            pending_snapshot: None,
            validate_reads: false,
            counters: TaskCounters {
                eval_counts: vec![0; n],
                ..TaskCounters::default()
            },
        }
    }

    /// Splits evaluation counts by segment. `ends` are exclusive global row
    /// positions in increasing order; rows past the last end count towards
    /// the last segment.
    pub fn with_segments(mut self, ends: Arc<[u64]>) -> Self {
        let segments = ends.len().max(1);
        self.counters.eval_counts = vec![0; segments * self.n];
        self.segment_ends = ends;
        self.locate_segment();
        self
    }

    pub fn with_read_validation(mut self, on: bool) -> Self {
        self.validate_reads = on;
        self
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn row_index(&self) -> u64 {
        self.row_index
    }

    /// Statistics of the current epoch.
    pub fn stats(&self) -> EpochStats {
        let mut stats = self.stats.clone();
        stats.processed += self.row_index - self.processed_synced;
        stats
    }

    fn sync_processed(&mut self) {
        self.stats.processed += self.row_index - self.processed_synced;
        self.processed_synced = self.row_index;
    }

    fn schedule(&mut self) {
        let boundary = self.last_attempt_row.saturating_add(self.monitor.calculate_rate() - 1);
        self.next_event = self.next_sample.min(boundary);
    }

    pub fn counters(&self) -> &TaskCounters {
        &self.counters
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Sets the global position of the next row.
    pub fn begin_partition(&mut self, offset: u64) {
        self.position = offset;
        self.locate_segment();
    }

    fn locate_segment(&mut self) {
        let ends = &self.segment_ends;
        let last = ends.len().saturating_sub(1);
        self.segment = ends.iter().position(|&e| self.position < e).unwrap_or(last);
        self.segment_end = if self.segment < last {
            ends[self.segment]
        } else {
            u64::MAX
        };
    }

    /// Adaptive path. Returns whether the record satisfies every predicate.
    pub fn process_record(&mut self, state: &RankState, query: &FilterQuery, record: &Record) -> bool {
        if self.row_index < self.next_event {
            let pass = self.evaluate_cached(query, record);
            self.finish_row(pass);
            return pass;
        }
        self.event_row(state, query, record)
    }

    /// Sample rows and epoch boundaries. The cached permutation is refreshed
    /// here only, so it can be up to `collect_rate` rows stale.
    #[inline(never)]
    fn event_row(&mut self, state: &RankState, query: &FilterQuery, record: &Record) -> bool {
        self.refresh_permutation(state);
        let pass = if self.row_index == self.next_sample {
            self.next_sample = self.next_sample.saturating_add(self.monitor.collect_rate());
            self.monitored_row(query, record)
        } else {
            self.evaluate_cached(query, record)
        };
        self.finish_row(pass);
        if self.row_index - self.last_attempt_row >= self.monitor.calculate_rate() {
            self.try_commit_epoch(state);
            self.last_attempt_row = self.row_index;
        }
        self.schedule();
        pass
    }

    #[inline]
    fn evaluate_cached(&mut self, query: &FilterQuery, record: &Record) -> bool {
        let base = self.segment * self.n;
        short_circuit(
            self.cached.order(),
            query,
            record,
            &mut self.counters.eval_counts[base..],
        )
    }

    /// Static path: fixed order, no monitoring, never touches a `RankState`.
    pub fn process_static(&mut self, perm: &Permutation, query: &FilterQuery, record: &Record) -> bool {
        let base = self.segment * self.n;
        let pass = short_circuit(perm.order(), query, record, &mut self.counters.eval_counts[base..]);
        self.finish_row(pass);
        pass
    }

    #[inline]
    fn finish_row(&mut self, pass: bool) {
        self.row_index += 1;
        self.counters.rows_in += 1;
        self.counters.rows_out += u64::from(pass);
        self.position += 1;
        if self.position >= self.segment_end {
            self.locate_segment();
        }
    }

    fn monitored_row(&mut self, query: &FilterQuery, record: &Record) -> bool {
        let started = Instant::now();
        evaluate_monitored_into(query, record, &mut self.outcome);
        self.counters.monitored_nanos += started.elapsed().as_nanos() as u64;
        self.counters.monitored_rows += 1;
        let base = self.segment * self.n;
        for c in &mut self.counters.eval_counts[base..base + self.n] {
            *c += 1;
        }
        self.stats
            .accumulate(&self.outcome)
            .expect("outcome buffer sized to the query");
        self.outcome.passed()
    }

    #[inline]
    fn refresh_permutation(&mut self, state: &RankState) {
        let epoch = state.epoch_id();
        if epoch != self.cached_epoch {
            self.cached_epoch = epoch;
            self.cached = state.read_permutation();
            self.counters.permutation_reads += 1;
            if self.validate_reads && !(self.cached.len() == self.n && is_bijection(self.cached.order())) {
                self.counters.invalid_reads += 1;
            }
        }
    }

    /// Attempts to publish ranks computed from this task's statistics. Never
    /// blocks: if another task holds the committer lock the attempt is
    /// deferred and the statistics keep accumulating.
    pub fn try_commit_epoch(&mut self, state: &RankState) -> CommitOutcome {
        self.sync_processed();
        if let Some(snapshot) = self.pending_snapshot.take() {
            if !self.stats.dominates(&snapshot) {
                self.counters.stats_regressions += 1;
            }
        }
        let outcome = self.commit_locked(state);
        match outcome {
            CommitOutcome::Committed => {
                self.counters.committed += 1;
                self.stats.reset();
            }
            CommitOutcome::Deferred => {
                self.counters.deferred += 1;
                self.pending_snapshot = Some(self.stats.clone());
            }
            CommitOutcome::SkippedNoSamples => {
                self.counters.skipped += 1;
                self.pending_snapshot = Some(self.stats.clone());
            }
        }
        outcome
    }

    fn commit_locked(&self, state: &RankState) -> CommitOutcome {
        let Some(mut committer) = state.committer.try_lock() else {
            return CommitOutcome::Deferred;
        };
        if self.stats.monitored == 0 {
            return CommitOutcome::SkippedNoSamples;
        }
        let (selectivities, normalized_costs, ranks) = match rank_inputs(&self.stats) {
            Ok(v) => v,
            Err(_) => return CommitOutcome::SkippedNoSamples,
        };
        let adjusted = update_adjusted_ranks(committer.adjusted.as_ref(), &ranks, self.momentum)
            .expect("rank vectors share the query length");
        let permutation = sort_permutation(&adjusted);
        state.permutation.store(Arc::new(permutation.clone()));
        let epoch_id = state.epoch.fetch_add(1, Ordering::AcqRel) + 1;
        committer.trace.push(CommitRecord {
            worker_id: state.worker_id,
            epoch_id,
            task_id: self.task_id,
            position: self.position,
            monitored: self.stats.monitored,
            selectivities,
            normalized_costs,
            adjusted_ranks: adjusted.values().to_vec(),
            permutation,
        });
        committer.adjusted = Some(adjusted);
        CommitOutcome::Committed
    }
}

fn rank_inputs(stats: &EpochStats) -> Result<(Vec<f64>, Vec<f64>, RankVector)> {
    let s = compute_selectivities(stats)?;
    let nc = normalize_costs(stats)?;
    let ranks = compute_ranks(&nc, &s)?;
    Ok((s, nc, ranks))
}

#[inline]
fn short_circuit(order: &[usize], query: &FilterQuery, record: &Record, counts: &mut [u64]) -> bool {
    let predicates = query.predicates();
    for &id in order {
        counts[id] += 1;
        if !predicates[id].evaluate(record) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub label: Option<String>,
    pub mode: OperatorMode,
    pub workers: usize,
    pub tasks_per_worker: usize,
    pub monitor: MonitorConfig,
    pub momentum: MomentumConfig,
    /// Record the global positions of passing rows.
    pub collect_output: bool,
    /// Check every freshly loaded permutation for being a bijection.
    pub validate_reads: bool,
    /// Exclusive segment end positions for per-segment evaluation counts.
    pub segment_ends: Vec<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            label: None,
            mode: OperatorMode::Adaptive,
            workers: 1,
            tasks_per_worker: 1,
            monitor: MonitorConfig::default(),
            momentum: MomentumConfig::default(),
            collect_output: false,
            validate_reads: false,
            segment_ends: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub wall_nanos: u64,
    pub rows_in: u64,
    pub rows_out: u64,
    pub eval_counts: Vec<u64>,
    pub segment_eval_counts: Vec<Vec<u64>>,
    /// Time spent evaluating monitored rows.
    pub total_eval_nanos: u64,
    pub monitored_rows: u64,
    pub committed: u64,
    pub deferred: u64,
    pub skipped: u64,
    pub permutation_reads: u64,
    pub invalid_reads: u64,
    pub stats_regressions: u64,
    /// Commit traces, one per worker, each ordered by epoch.
    pub traces: Vec<Vec<CommitRecord>>,
    pub passed_positions: Option<Vec<u64>>,
}

impl RunReport {
    pub fn total_eval_count(&self) -> u64 {
        self.eval_counts.iter().sum()
    }

    pub fn segment_total(&self, segment: usize) -> u64 {
        self.segment_eval_counts
            .get(segment)
            .map(|c| c.iter().sum())
            .unwrap_or(0)
    }

    pub fn commits(&self) -> impl Iterator<Item = &CommitRecord> {
        self.traces.iter().flatten()
    }
}

/// Runs `query` over `partitions`. Every worker gets its own [`RankState`]
/// and `tasks_per_worker` threads; all tasks pull partitions from a single
/// shared queue.
pub fn run_partitioned(query: &FilterQuery, partitions: &[Partition], options: &RunOptions) -> Result<RunReport> {
    if partitions.is_empty() {
        return Err(Error::Config("no partitions to process".into()));
    }
    if options.workers == 0 || options.tasks_per_worker == 0 {
        return Err(Error::Config("workers and tasks per worker must be at least 1".into()));
    }
    if let OperatorMode::Static(p) = &options.mode {
        if p.len() != query.len() {
            return Err(Error::InvalidPermutation(format!(
                "static order {p} has {} entries, query has {} predicates",
                p.len(),
                query.len()
            )));
        }
    }
    let n = query.len();
    let segment_ends: Arc<[u64]> = Arc::from(options.segment_ends.clone());
    let next = AtomicUsize::new(0);
    let states: Vec<RankState> = (0..options.workers).map(|w| RankState::new(w, n)).collect();

    let started = Instant::now();
    let finished: Vec<(TaskCounters, Vec<u64>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for state in &states {
            for t in 0..options.tasks_per_worker {
                let task_id = state.worker_id * options.tasks_per_worker + t;
                let next = &next;
                let segment_ends = segment_ends.clone();
                handles.push(scope.spawn(move || {
                    let mut ctx = TaskContext::new(task_id, query, options.monitor, options.momentum)
                        .with_segments(segment_ends)
                        .with_read_validation(options.validate_reads);
                    let mut passed = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(part) = partitions.get(i) else { break };
                        ctx.begin_partition(part.offset);
                        for (j, record) in part.records.iter().enumerate() {
                            let pass = match &options.mode {
                                OperatorMode::Adaptive => ctx.process_record(state, query, record),
                                OperatorMode::Static(p) => ctx.process_static(p, query, record),
                            };
                            if pass && options.collect_output {
                                passed.push(part.offset + j as u64);
                            }
                        }
                    }
                    (ctx.counters, passed)
                }));
            }
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("filter task panicked"))
            .collect()
    });
    let wall_nanos = started.elapsed().as_nanos() as u64;

    let segments = options.segment_ends.len().max(1);
    let mut report = RunReport {
        label: options.label.clone().unwrap_or_else(|| options.mode.label()),
        wall_nanos,
        rows_in: 0,
        rows_out: 0,
        eval_counts: vec![0; n],
        segment_eval_counts: vec![vec![0; n]; segments],
        total_eval_nanos: 0,
        monitored_rows: 0,
        committed: 0,
        deferred: 0,
        skipped: 0,
        permutation_reads: 0,
        invalid_reads: 0,
        stats_regressions: 0,
        traces: states.into_iter().map(RankState::into_trace).collect(),
        passed_positions: options.collect_output.then(Vec::new),
    };
    for (c, passed) in finished {
        report.rows_in += c.rows_in;
        report.rows_out += c.rows_out;
        for (k, &count) in c.eval_counts.iter().enumerate() {
            report.eval_counts[k % n] += count;
            report.segment_eval_counts[k / n][k % n] += count;
        }
        report.total_eval_nanos += c.monitored_nanos;
        report.monitored_rows += c.monitored_rows;
        report.committed += c.committed;
        report.deferred += c.deferred;
        report.skipped += c.skipped;
        report.permutation_reads += c.permutation_reads;
        report.invalid_reads += c.invalid_reads;
        report.stats_regressions += c.stats_regressions;
        if let Some(all) = report.passed_positions.as_mut() {
            all.extend(passed);
        }
    }
    if let Some(all) = report.passed_positions.as_mut() {
        all.sort_unstable();
    }
    Ok(report)
}
