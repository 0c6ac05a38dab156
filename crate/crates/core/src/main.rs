use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adaptive_filter::datagen;
use adaptive_filter::harness::{self, presets, DataSource, Experiment, ExperimentSpec, ModeResult, Parameter};
use adaptive_filter::parse::parse_query;
use adaptive_filter::rank::Permutation;
use adaptive_filter::specfile::{parse_list, parse_spec, render_spec, SpecFile};
use adaptive_filter::{MomentumConfig, MonitorConfig, OperatorMode};

#[derive(Parser)]
#[command(name = "afbench", version, about = "Adaptive conjunctive filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the spec file of a built-in experiment.
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        /// Total rows (split evenly between segments for `drift`).
        #[arg(long, default_value_t = harness::DESK_ROWS)]
        rows: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the rows described by a spec file as CSV.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one mode.
    Run {
        #[command(flatten)]
        common: Common,
        /// `adaptive` or `static:<comma separated predicate ids>`.
        #[arg(long, default_value = "adaptive")]
        mode: String,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every static order and the adaptive operator.
    SweepPerms {
        #[command(flatten)]
        common: Common,
        /// Commit trace of the adaptive run.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the adaptive operator once per parameter value.
    SweepParam {
        #[command(flatten)]
        common: Common,
        /// collectRate, calculateRate or momentum.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Sweep on a multi-segment dataset and report when the adaptive
    /// operator adopts each segment's best order.
    Drift {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Sweep,
    Sensitivity,
    Drift,
}

#[derive(Args)]
struct Common {
    /// Dataset spec file. Supplies segment boundaries and a default query.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// A CSV file, or `gen:<spec file>` to generate the rows in memory. A CSV
    /// without `--spec` is treated as a single segment.
    #[arg(long)]
    data: Option<String>,
    /// Overrides the query in the spec file.
    #[arg(long)]
    query: Option<String>,
    /// Busy-work iterations per predicate, comma separated.
    #[arg(long)]
    padding: Option<String>,
    #[arg(long, default_value_t = harness::DESK_WORKERS)]
    workers: usize,
    #[arg(long, default_value_t = harness::DESK_TASKS)]
    tasks: usize,
    #[arg(long, default_value_t = harness::DESK_PARTITION_SIZE)]
    partition_size: usize,
    #[arg(long, default_value_t = adaptive_filter::monitor::DEFAULT_COLLECT_RATE)]
    collect_rate: u64,
    #[arg(long, default_value_t = harness::DESK_CALCULATE_RATE)]
    calculate_rate: u64,
    #[arg(long, default_value_t = adaptive_filter::rank::DEFAULT_MOMENTUM)]
    momentum: f64,
    #[arg(long, default_value_t = harness::DESK_REPETITIONS)]
    repetitions: usize,
    /// Result CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_spec(path: &Path) -> anyhow::Result<SpecFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("parsing {}", path.display()))
}

fn preset(name: PresetName, rows: u64, seed: u64) -> anyhow::Result<SpecFile> {
    let (dataset, query) = match name {
        PresetName::Sweep | PresetName::Sensitivity => {
            let dataset = presets::stationary_dataset(rows, seed);
            let targets = match name {
                PresetName::Sweep => presets::sweep_targets(),
                _ => presets::sensitivity_targets(),
            };
            let query = harness::derive_thresholds(&targets, &dataset)?.query;
            (dataset, query)
        }
        PresetName::Drift => presets::drift(rows / 2, seed),
    };
    Ok(SpecFile {
        dataset,
        query: Some(query.to_string()),
        padding: Some(query.predicates().iter().map(|p| p.pad_iterations()).collect()),
    })
}

impl Common {
    fn experiment(&self) -> anyhow::Result<Experiment> {
        let generated = self.data.as_deref().and_then(|d| d.strip_prefix("gen:"));
        let csv = self.data.as_deref().filter(|_| generated.is_none());
        let spec_path = match (generated, &self.spec) {
            (Some(_), Some(_)) => bail!("give the spec either as `--data gen:<file>` or as `--spec`"),
            (Some(g), None) => Some(PathBuf::from(g)),
            (None, s) => s.clone(),
        };
        let spec = spec_path.as_deref().map(load_spec).transpose()?;
        let loaded = match csv {
            Some(path) => {
                let file = File::open(path).with_context(|| format!("opening {path}"))?;
                Some(datagen::read_dataset(BufReader::new(file))?)
            }
            None => None,
        };

        let data: DataSource = match (&spec, &loaded) {
            (None, None) => bail!("no data: pass `--data` or `--spec`"),
            (Some(spec), None) => spec.dataset.clone().into(),
            (spec, Some((schema, records))) => {
                let segment_ends = match spec {
                    Some(spec) => {
                        if spec.dataset.schema() != schema {
                            bail!("the CSV columns do not match the spec file");
                        }
                        if records.len() as u64 != spec.dataset.total_rows() {
                            bail!(
                                "the CSV has {} rows, the spec describes {}",
                                records.len(),
                                spec.dataset.total_rows()
                            );
                        }
                        spec.dataset.segment_ends()
                    }
                    None => vec![records.len() as u64],
                };
                DataSource::Loaded {
                    schema: schema.clone(),
                    segment_ends,
                }
            }
        };

        let text = self
            .query
            .as_deref()
            .or(spec.as_ref().and_then(|s| s.query.as_deref()))
            .context("no query given and no spec file provides one")?;
        let mut query = parse_query(text, data.schema())?;
        let padding = match &self.padding {
            Some(p) => Some(parse_list::<u32>(p).map_err(anyhow::Error::msg)?),
            None if self.query.is_none() => spec.as_ref().and_then(|s| s.padding.clone()),
            None => None,
        };
        if let Some(p) = padding {
            query = query.with_padding(&p)?;
        }
        let exp = ExperimentSpec {
            data,
            query,
            workers: self.workers,
            tasks_per_worker: self.tasks,
            partition_size: self.partition_size,
            monitor: MonitorConfig::new(self.collect_rate, self.calculate_rate)?,
            momentum: MomentumConfig::new(self.momentum)?,
            repetitions: self.repetitions,
        };
        Ok(match loaded {
            Some((_, records)) => Experiment::from_records(exp, records)?,
            None => Experiment::prepare(exp)?,
        })
    }
}

fn parse_mode(mode: &str) -> anyhow::Result<OperatorMode> {
    if mode == "adaptive" {
        return Ok(OperatorMode::Adaptive);
    }
    let Some(order) = mode.strip_prefix("static:") else {
        bail!("unknown mode `{mode}`, expected `adaptive` or `static:<ids>`");
    };
    let order = parse_list::<usize>(order).map_err(anyhow::Error::msg)?;
    Ok(OperatorMode::Static(Permutation::new(order)?))
}

fn write_trace(path: Option<&Path>, result: &ModeResult) -> anyhow::Result<()> {
    if let Some(p) = path {
        harness::write_trace_csv(output(Some(p))?, result.report.traces.iter().flatten())?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Preset { name, rows, seed, out } => {
            let mut w = output(out.as_deref())?;
            w.write_all(render_spec(&preset(name, rows, seed)?).as_bytes())?;
            w.flush()?;
        }
        Command::Generate { spec, out } => {
            let spec = load_spec(&spec)?;
            datagen::write_dataset(
                output(out.as_deref())?,
                spec.dataset.schema(),
                datagen::generate(&spec.dataset),
            )?;
        }
        Command::Run { common, mode, trace } => {
            let exp = common.experiment()?;
            let result = exp.run_mode(parse_mode(&mode)?)?;
            harness::write_sweep_csv(output(common.out.as_deref())?, std::slice::from_ref(&result))?;
            write_trace(trace.as_deref(), &result)?;
        }
        Command::SweepPerms { common, trace } => {
            let exp = common.experiment()?;
            let results = harness::sweep_permutations(&exp)?;
            harness::write_sweep_csv(output(common.out.as_deref())?, &results)?;
            write_trace(trace.as_deref(), results.last().expect("adaptive run"))?;
        }
        Command::SweepParam { common, param, values } => {
            let exp = common.experiment()?;
            let rows = harness::sweep_parameter(&exp, Parameter::parse(&param)?, &values)?;
            harness::write_parameter_csv(output(common.out.as_deref())?, &rows)?;
        }
        Command::Drift { common, trace } => {
            let exp = common.experiment()?;
            let report = harness::drift_experiment(&exp)?;
            for (i, oracle) in report.segment_oracles.iter().enumerate() {
                eprintln!("segment {i}: best order {oracle}");
            }
            for a in &report.adoptions {
                match a.commits_until_adopted {
                    Some(k) => eprintln!(
                        "worker {} adopted the segment {} order at epoch {} ({k} commits into the segment)",
                        a.worker_id,
                        a.segment,
                        a.adopted_epoch.expect("set together")
                    ),
                    None => eprintln!("worker {} never adopted the segment {} order", a.worker_id, a.segment),
                }
            }
            harness::write_drift_csv(output(common.out.as_deref())?, &report)?;
            write_trace(trace.as_deref(), report.adaptive())?;
        }
    }
    Ok(())
}
