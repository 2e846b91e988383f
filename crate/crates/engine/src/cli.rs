//! CLI subcommands: ingest, sample, group, query, forecast, bench.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use aggcast_core::estimate::{
    estimate_count, estimate_sum, rstd_bound, sample_subset_consistency, EstimateReport,
};
use aggcast_core::group::{kcenter_group, MeanKind, MeasureGrouping, ProbeRows};
use aggcast_core::sample::{build_multilayer, WeightSource};
use aggcast_core::table::{Constraint, LoadOptions, MeasureVector};

use crate::bench::{bench_samplers, report_csv, BenchConfig, BenchSampler};
use crate::pipeline::{run_task, EngineError, RunOptions, SourceInfo};
use crate::store::SampleStore;
use crate::synth::{heavy_tailed_table, HeavyTailedSpec};
use crate::task::{parse_constraint, parse_task, TaskError};

/// Sampling-based approximate aggregation and forecasting over time-series
/// relations.
#[derive(Debug, Parser)]
#[command(name = "aggcast", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV relation and store a canonical copy.
    Ingest(IngestArgs),
    /// Build a multi-layer GSW sample ladder in the store.
    Sample(SampleArgs),
    /// Partition measures into groups by greedy k-center clustering.
    Group(GroupArgs),
    /// Answer one aggregation query from a sample (or exactly).
    Query(QueryArgs),
    /// Run a full forecasting task.
    Forecast(ForecastArgs),
    /// Compare samplers on a synthetic or stored workload.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input CSV file (header row required).
    #[arg(long)]
    pub csv: PathBuf,
    /// Schema file with one `column=dim|measure|ts` line per column.
    /// Alternatively assign roles with --dims/--measures/--ts-col.
    #[arg(long, conflicts_with_all = ["dims", "measures", "ts_col"])]
    pub schema: Option<PathBuf>,
    /// Dimension column names, comma-separated.
    #[arg(long, value_delimiter = ',', requires = "ts_col")]
    pub dims: Vec<String>,
    /// Measure column names, comma-separated.
    #[arg(long, value_delimiter = ',', requires = "ts_col")]
    pub measures: Vec<String>,
    /// Timestamp column name.
    #[arg(long)]
    pub ts_col: Option<String>,
    #[arg(long)]
    pub store: PathBuf,
    /// Replace zero measures with this epsilon instead of rejecting them.
    #[arg(long)]
    pub zero_epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// `measure:<name>` for a single-measure sample, or `group:<manifest>`
    /// to build one ladder per group in a k-center manifest file.
    #[arg(long)]
    pub weights: String,
    /// Mean kind for group weights (geo|arith); overrides the manifest.
    #[arg(long)]
    pub mean: Option<String>,
    /// Strictly increasing positive deltas, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Number of groups.
    #[arg(long)]
    pub groups: usize,
    /// Mean kind used for each group's shared weights (geo|arith).
    #[arg(long)]
    pub mean: String,
    /// Rows used to estimate pairwise distances (default: 10000-row
    /// subsample; 0 = use every row).
    #[arg(long)]
    pub probe_rows: Option<usize>,
    /// Write the manifest here instead of `<store>/groups.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Constraint expression, e.g. "Age <= 30 AND Gender = 'F'".
    #[arg(long)]
    pub constraint: String,
    #[arg(long)]
    pub measure: String,
    #[arg(long)]
    pub ts: i64,
    /// Sample group to query (default: a group covering the measure).
    #[arg(long)]
    pub group: Option<String>,
    /// Layer delta (default: the smallest).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Answer exactly from the stored base table.
    #[arg(long)]
    pub exact: bool,
    /// Estimate COUNT(*) instead of SUM(measure).
    #[arg(long)]
    pub count: bool,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Task statement, e.g.
    /// "FORECAST SUM(M) FROM T WHERE TRUE USING (0, 149) OPTION
    /// (MODEL='arima', FORE_PERIOD=7)".
    #[arg(long)]
    pub task: String,
    /// Answer aggregations exactly from the stored base table.
    #[arg(long)]
    pub exact: bool,
    /// Write plot data (idx,ts,actual,estimate,forecast,lo,hi) here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Write the forecast as CSV (step,point,lo,hi) here.
    #[arg(long)]
    pub forecast_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Use the table stored here; otherwise a synthetic table is generated.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Rows of the synthetic table.
    #[arg(long, default_value_t = 100_000)]
    pub synthetic_rows: usize,
    /// Timestamps of the synthetic table.
    #[arg(long, default_value_t = 160)]
    pub synthetic_ts: usize,
    #[arg(long, default_value_t = 0xBE7C)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.1])]
    pub rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5])]
    pub selectivities: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 150)]
    pub train: usize,
    #[arg(long, default_value_t = 7)]
    pub horizon: usize,
    /// Samplers to compare (uniform, priority, opt-gsw, geo-gsw,
    /// arith-gsw).
    #[arg(long, value_delimiter = ',')]
    pub samplers: Option<Vec<String>>,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit codes: 0 ok, 2 parse error, 3 data error, 4 no covering
/// sample.
pub fn exit_code(err: &EngineError) -> i32 {
    match err {
        EngineError::Task(_) => 2,
        EngineError::EmptyWindow { .. } => 2,
        EngineError::NoCoveringSample { .. } => 4,
        _ => 3,
    }
}

fn data_err(e: impl Into<EngineError>) -> EngineError {
    e.into()
}

pub fn run(cli: Cli) -> Result<(), EngineError> {
    match cli.command {
        Command::Ingest(args) => {
            let store = SampleStore::open(&args.store)?;
            let csv = fs::read(&args.csv).map_err(|e| {
                data_err(crate::store::StoreError::Io {
                    path: args.csv.clone(),
                    source: e,
                })
            })?;
            let schema = match (&args.schema, &args.ts_col) {
                (Some(path), _) => fs::read_to_string(path).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?,
                (None, Some(ts_col)) => {
                    let mut lines = Vec::new();
                    for d in &args.dims {
                        lines.push(format!("{d}=dim"));
                    }
                    for m in &args.measures {
                        lines.push(format!("{m}=measure"));
                    }
                    lines.push(format!("{ts_col}=ts"));
                    lines.join("\n") + "\n"
                }
                (None, None) => {
                    return Err(TaskError::Syntax {
                        position: 0,
                        expected: "--schema or --dims/--measures/--ts-col".into(),
                    }
                    .into())
                }
            };
            let table = store.ingest(
                &csv,
                &schema,
                &LoadOptions {
                    zero_epsilon: args.zero_epsilon,
                },
            )?;
            println!("rows={}", table.len());
            println!("dims={}", table.dims().len());
            println!("measures={}", table.measures().len());
            println!("timestamps={}", table.timestamp_domain().len());
            Ok(())
        }
        Command::Sample(args) => {
            let store = SampleStore::open(&args.store)?;
            let table = store.load_table()?;
            let domain = table.timestamp_domain();
            let mean_override = match args.mean.as_deref() {
                None => None,
                Some(s) => Some(s.parse::<MeanKind>().map_err(data_err)?),
            };

            let mut jobs: Vec<(String, WeightSource, Vec<f64>)> = Vec::new();
            if let Some(measure) = args.weights.strip_prefix("measure:") {
                let mv = table.measure_vector(measure)?;
                jobs.push((
                    measure.to_string(),
                    WeightSource::Measure(measure.to_string()),
                    aggcast_core::estimate::optimal_weights(&mv),
                ));
            } else if let Some(manifest_path) = args.weights.strip_prefix("group:") {
                let text = fs::read_to_string(manifest_path).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: PathBuf::from(manifest_path),
                        source: e,
                    })
                })?;
                let measures: Vec<MeasureVector> = table
                    .measure_names()
                    .iter()
                    .map(|m| table.measure_vector(m))
                    .collect::<Result<_, _>>()?;
                let grouping = MeasureGrouping::from_manifest(&text, &measures)
                    .map_err(aggcast_core::estimate::EstimateError::from)?;
                for g in grouping.groups {
                    let kind = mean_override.unwrap_or(g.kind);
                    let refs: Vec<&MeasureVector> = g
                        .members
                        .iter()
                        .map(|m| measures.iter().find(|mv| &mv.name == m).unwrap())
                        .collect();
                    let weights = aggcast_core::group::mean_weights(&refs, kind)
                        .map_err(aggcast_core::estimate::EstimateError::from)?;
                    let source = match kind {
                        MeanKind::Geometric => WeightSource::GeoMean(g.members.clone()),
                        MeanKind::Arithmetic => WeightSource::ArithMean(g.members.clone()),
                    };
                    jobs.push((g.name, source, weights));
                }
            } else {
                return Err(TaskError::Syntax {
                    position: 0,
                    expected: "--weights measure:<name> or group:<manifest>".into(),
                }
                .into());
            }

            for (name, source, weights) in jobs {
                let ml = build_multilayer(&table, &weights, source, &args.deltas, args.seed)?;
                store.write_group(&name, ml.layers(), &domain)?;
                for layer in ml.layers() {
                    println!(
                        "group={name} delta={} rows={}",
                        layer.delta,
                        layer.len()
                    );
                }
            }
            Ok(())
        }
        Command::Group(args) => {
            let store = SampleStore::open(&args.store)?;
            let table = store.load_table()?;
            let kind: MeanKind = args.mean.parse().map_err(data_err)?;
            let measures: Vec<MeasureVector> = table
                .measure_names()
                .iter()
                .map(|m| table.measure_vector(m))
                .collect::<Result<_, _>>()?;
            let probe = match args.probe_rows {
                Some(0) => ProbeRows::All,
                Some(max) => ProbeRows::Subsample { max, seed: 0x9E37 },
                None => ProbeRows::default(),
            };
            let grouping = kcenter_group(&measures, args.groups, kind, probe)
                .map_err(aggcast_core::estimate::EstimateError::from)?;
            let manifest = grouping.to_manifest();
            match &args.out {
                Some(path) => fs::write(path, &manifest).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?,
                None => store.write_groups_manifest(&manifest)?,
            }
            print!("{manifest}");
            println!("radius={}", grouping.radius);
            Ok(())
        }
        Command::Query(args) => {
            let store = SampleStore::open(&args.store)?;
            let constraint: Constraint = parse_constraint(&args.constraint)?;
            if args.exact {
                let table = store.load_table()?;
                let (value, rows) = if args.count {
                    let c = table.exact_subset_count(&constraint, args.ts)?;
                    (c as f64, c)
                } else {
                    (
                        table.exact_subset_sum(&constraint, &args.measure, args.ts)?,
                        table.exact_subset_count(&constraint, args.ts)?,
                    )
                };
                println!(
                    "{}",
                    EstimateReport {
                        value,
                        rows_used: rows,
                        theta: None,
                        bound: None,
                        delta: 0.0,
                    }
                );
                return Ok(());
            }
            let group_name = match &args.group {
                Some(g) => g.clone(),
                None => {
                    let groups = store.list_groups()?;
                    groups
                        .iter()
                        .find(|g| g.weight_source.covers(&args.measure))
                        .map(|g| g.name.clone())
                        .ok_or_else(|| EngineError::NoCoveringSample {
                            measure: args.measure.clone(),
                            available: groups.iter().map(|g| g.name.clone()).collect(),
                        })?
                }
            };
            let info = store.group(&group_name)?;
            let delta = match args.delta {
                Some(d) => d,
                None => info
                    .deltas
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
            };
            let sample = store.load_layer(&group_name, delta)?;
            let est = if args.count {
                estimate_count(&sample, &constraint, args.ts)?
            } else {
                estimate_sum(&sample, &constraint, &args.measure, args.ts)?
            };
            let stats = if args.count {
                None
            } else {
                sample_subset_consistency(&sample, &constraint, &args.measure, Some(args.ts))?
            };
            let bound = match (&stats, est.sample_rows_used) {
                (Some(s), n) if n > 0 => Some(rstd_bound(s.theta.max(1.0), n as f64)?),
                _ => None,
            };
            println!(
                "{}",
                EstimateReport {
                    value: est.value,
                    rows_used: est.sample_rows_used,
                    theta: stats.map(|s| s.theta),
                    bound,
                    delta,
                }
            );
            Ok(())
        }
        Command::Forecast(args) => {
            let store = SampleStore::open(&args.store)?;
            let task = parse_task(&args.task)?;
            let result = run_task(&store, &task, &RunOptions { exact: args.exact })?;
            print!("{}", result.canonical_block());
            print!("{}", result.timing_block());
            if let SourceInfo::Layer { warning: true, .. } = result.source {
                eprintln!("warning: no layer met ERROR_TARGET; using the finest layer");
            }
            if let Some(path) = &args.forecast_csv {
                fs::write(path, result.forecast.to_csv()).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?;
            }
            if let Some(path) = args.plot {
                let actual = if store.has_table() && !args.exact {
                    let table = store.load_table()?;
                    let mut vals = Vec::with_capacity(result.timestamps.len());
                    for (ts, _) in result.timestamps.iter().zip(&result.estimates) {
                        vals.push(match &task.agg {
                            crate::task::Aggregate::Sum(m) => {
                                table.exact_subset_sum(&task.constraint, m, *ts)?
                            }
                            crate::task::Aggregate::Count => {
                                table.exact_subset_count(&task.constraint, *ts)? as f64
                            }
                            crate::task::Aggregate::Avg(m) => {
                                let s = table.exact_subset_sum(&task.constraint, m, *ts)?;
                                let c = table.exact_subset_count(&task.constraint, *ts)?;
                                if c > 0 {
                                    s / c as f64
                                } else {
                                    0.0
                                }
                            }
                        });
                    }
                    Some(vals)
                } else {
                    None
                };
                fs::write(&path, result.plot_csv(actual.as_deref())).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?;
            }
            Ok(())
        }
        Command::Bench(args) => {
            let table = match &args.store {
                Some(dir) => SampleStore::open(dir)?.load_table()?,
                None => heavy_tailed_table(&HeavyTailedSpec {
                    rows: args.synthetic_rows,
                    timestamps: (0..args.synthetic_ts as i64).collect(),
                    pareto_alpha: 1.5,
                    correlated_ratio: 4.0,
                    seed: args.seed,
                }),
            };
            let samplers: Vec<BenchSampler> = match &args.samplers {
                None => BenchSampler::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|n| {
                        BenchSampler::ALL
                            .iter()
                            .find(|s| s.name() == n)
                            .copied()
                            .ok_or_else(|| {
                                data_err(TaskError::Syntax {
                                    position: 0,
                                    expected: format!(
                                        "sampler name in {:?}",
                                        BenchSampler::ALL.map(|s| s.name())
                                    ),
                                })
                            })
                    })
                    .collect::<Result<_, _>>()?,
            };
            let cfg = BenchConfig {
                rates: args.rates,
                selectivities: args.selectivities,
                trials: args.trials,
                train_len: args.train,
                horizon: args.horizon,
                master_seed: args.seed,
                ..Default::default()
            };
            let rows = bench_samplers(&table, &samplers, &cfg)?;
            let csv = report_csv(&rows);
            match &args.out {
                Some(path) => fs::write(path, &csv).map_err(|e| {
                    data_err(crate::store::StoreError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}
