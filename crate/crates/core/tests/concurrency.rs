use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use adaptive_filter::datagen::{self, ColumnSpec, DatasetSpec, Segment};
use adaptive_filter::model::{Comparator, FilterQuery, Predicate, Record, Value, ValueKind};
use adaptive_filter::operator::{run_partitioned, RankState, RunOptions, TaskContext};
use adaptive_filter::rank::{is_bijection, MomentumConfig};
use adaptive_filter::MonitorConfig;

fn data(rows: u64) -> (FilterQuery, Vec<Record>) {
    let spec = DatasetSpec::new(
        vec![Segment {
            rows,
            columns: vec![
                ColumnSpec::new("a", ValueKind::Integer, 0.0, 10.0),
                ColumnSpec::new("b", ValueKind::Integer, 0.0, 10.0),
            ],
        }],
        99,
    )
    .unwrap();
    let query = FilterQuery::new(
        spec.schema().clone(),
        vec![
            Predicate::new(0, Comparator::Gt, Value::Integer(-12)),
            Predicate::new(1, Comparator::Lt, Value::Integer(3)),
            Predicate::new(0, Comparator::Ne, Value::Integer(0)),
            Predicate::new(1, Comparator::Gt, Value::Integer(-5)),
            Predicate::new(0, Comparator::Lt, Value::Integer(8)),
        ],
    )
    .unwrap();
    (query, datagen::generate(&spec).collect())
}

#[test]
fn fresh_state_reads_the_identity() {
    let state = RankState::new(0, 5);
    assert_eq!(state.read_permutation().order(), &[0, 1, 2, 3, 4]);
    assert_eq!(state.epoch_id(), 0);
}

#[test]
fn readers_never_see_a_torn_permutation() {
    let (query, records) = data(60_000);
    let state = RankState::new(0, query.len());
    let done = AtomicBool::new(false);
    let reads = AtomicUsize::new(0);
    let torn = AtomicUsize::new(0);
    // every row is monitored and every 5 rows end an epoch
    let monitor = MonitorConfig::new(1, 5).unwrap();
    std::thread::scope(|s| {
        for _ in 0..2 {
            s.spawn(|| {
                while !done.load(Ordering::Acquire) {
                    let p = state.read_permutation();
                    if !(p.len() == query.len() && is_bijection(p.order())) {
                        torn.fetch_add(1, Ordering::Relaxed);
                    }
                    reads.fetch_add(1, Ordering::Relaxed);
                }
            });
        }
        let tasks: Vec<_> = records
            .chunks(records.len() / 8)
            .enumerate()
            .map(|(t, chunk)| {
                let (state, query) = (&state, &query);
                s.spawn(move || {
                    let mut ctx = TaskContext::new(t, query, monitor, MomentumConfig::new(0.0).unwrap())
                        .with_read_validation(true);
                    for r in chunk {
                        ctx.process_record(state, query, r);
                    }
                    ctx.counters().clone()
                })
            })
            .collect();
        let counters: Vec<_> = tasks.into_iter().map(|h| h.join().unwrap()).collect();
        done.store(true, Ordering::Release);
        assert!(counters
            .iter()
            .all(|c| c.invalid_reads == 0 && c.stats_regressions == 0));
        let committed: u64 = counters.iter().map(|c| c.committed).sum();
        assert_eq!(committed, state.epoch_id());
    });
    assert_eq!(torn.into_inner(), 0);
    assert!(reads.into_inner() > 0);
    let trace = state.trace();
    let epochs: Vec<u64> = trace.iter().map(|c| c.epoch_id).collect();
    assert_eq!(epochs, (1..=trace.len() as u64).collect::<Vec<_>>());
    assert!(trace.iter().all(|c| is_bijection(c.permutation.order())));
}

#[test]
fn single_committer_per_epoch_across_runs() {
    let (query, records) = data(200_000);
    let partitions = datagen::partition(records, 5_000).unwrap();
    let options = RunOptions {
        tasks_per_worker: 8,
        monitor: MonitorConfig::new(10, 200).unwrap(),
        validate_reads: true,
        ..RunOptions::default()
    };
    for _ in 0..5 {
        let r = run_partitioned(&query, &partitions, &options).unwrap();
        assert_eq!(r.invalid_reads, 0);
        assert_eq!(r.stats_regressions, 0);
        let trace = &r.traces[0];
        assert_eq!(trace.len() as u64, r.committed);
        let epochs: Vec<u64> = trace.iter().map(|c| c.epoch_id).collect();
        assert_eq!(epochs, (1..=trace.len() as u64).collect::<Vec<_>>());
        assert!(trace.iter().all(|c| c.task_id < 8));
        // one attempt per completed task epoch; each task may end mid-epoch
        let attempts = r.committed + r.deferred + r.skipped;
        assert!(
            attempts <= r.rows_in / 200 && attempts + 8 >= r.rows_in / 200,
            "{attempts}"
        );
    }
}
