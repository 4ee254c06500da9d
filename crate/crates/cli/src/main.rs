//! `strata-bench`: generate workloads, run one windowed query, or sweep
//! samplers against each other.
//!
//! Failures print a single JSON line `{"error": ..., "kind": ...}` on
//! standard error and exit with a nonzero status.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stratified_stream::bench::{self, emit_report, ExperimentPlan, ReportFormat, SweepVar, WorkloadSource};
use stratified_stream::distributed::WorkerConfig;
use stratified_stream::engine::{ExecutionConfig, ExecutionModel, SamplerKind, StreamEngine};
use stratified_stream::estimator::{IntervalMethod, SigmaRule};
use stratified_stream::record::{QueryBudget, QuerySpec, WindowSpec};
use stratified_stream::workload::{generate, preset, replay, WorkloadSpec, PRESETS};

#[derive(Parser)]
#[command(name = "strata-bench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic workload as a record file.
    Generate(GenerateArgs),
    /// Run one windowed query over a workload.
    Run(RunArgs),
    /// Compare samplers over a parameter sweep.
    Bench(BenchArgs),
    /// List the built-in workloads.
    Presets,
}

#[derive(Args)]
struct WorkloadArgs {
    /// Preset name, `.toml` workload file, or record file.
    #[arg(long)]
    workload: String,
    /// Overrides the synthetic workload's duration.
    #[arg(long)]
    duration_secs: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 10_000)]
    window_ms: u64,
    #[arg(long, default_value_t = 5_000)]
    slide_ms: u64,
    /// Sampling interval; defaults to the slide.
    #[arg(long)]
    interval_ms: Option<u64>,
}

impl WindowArgs {
    fn spec(&self) -> Result<WindowSpec, Failure> {
        Ok(WindowSpec::new(self.window_ms, self.slide_ms, self.interval_ms.unwrap_or(self.slide_ms))?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryKind {
    Sum,
    Mean,
    Count,
    Histogram,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Batched,
    Pipelined,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_enum, default_value = "sum")]
    query: QueryKind,
    #[arg(long)]
    bucket_width: Option<f64>,
    /// Also report every stratum separately.
    #[arg(long)]
    per_stratum: bool,
    /// Error-bound rule: 68, 95 or 99.7 (normal), or `t:<confidence>`.
    #[arg(long, default_value = "95")]
    bound: String,
}

impl QueryArgs {
    fn spec(&self) -> Result<QuerySpec, Failure> {
        let q = match self.query {
            QueryKind::Sum => QuerySpec::sum(),
            QueryKind::Mean => QuerySpec::mean(),
            QueryKind::Count => QuerySpec::count(),
            QueryKind::Histogram => {
                let w = self
                    .bucket_width
                    .ok_or_else(|| Failure::usage("--query histogram needs --bucket-width"))?;
                QuerySpec::histogram(w)?
            }
        };
        if self.bucket_width.is_some() && !matches!(self.query, QueryKind::Histogram) {
            return Err(Failure::usage("--bucket-width only applies to --query histogram"));
        }
        Ok(q.with_per_stratum(self.per_stratum))
    }

    fn method(&self) -> Result<IntervalMethod, Failure> {
        let rule = |r| Ok(IntervalMethod::Normal { rule: r });
        match self.bound.as_str() {
            "68" => rule(SigmaRule::One),
            "95" => rule(SigmaRule::Two),
            "99.7" => rule(SigmaRule::Three),
            other => match other.strip_prefix("t:").map(str::parse::<f64>) {
                Some(Ok(c)) if c > 0.0 && c < 1.0 => Ok(IntervalMethod::StudentT { confidence: c }),
                _ => Err(Failure::usage(format!("invalid --bound `{other}` (68, 95, 99.7 or t:<confidence>)"))),
            },
        }
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Sampling fraction in (0, 1].
    #[arg(long, conflicts_with = "budget")]
    fraction: Option<f64>,
    /// Absolute sample size per interval.
    #[arg(long)]
    budget: Option<usize>,
}

impl BudgetArgs {
    fn budget(&self, default_fraction: f64) -> Result<QueryBudget, Failure> {
        Ok(match (self.fraction, self.budget) {
            (_, Some(n)) => QueryBudget::absolute(n)?,
            (Some(f), None) => QueryBudget::fraction(f)?,
            (None, None) => QueryBudget::fraction(default_fraction)?,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, default_value = "oasrs")]
    sampler: SamplerKind,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    query: QueryArgs,
    /// Execution model; defaults to pipelined for oasrs and none, batched
    /// for srs and sts and for more than one worker.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Records may arrive this far behind the newest timestamp.
    #[arg(long, default_value_t = 0)]
    lateness_ms: u64,
    /// Grow the budget while the relative error bound exceeds this.
    #[arg(long)]
    target_error: Option<f64>,
    /// Also compute exact answers and accuracy loss.
    #[arg(long)]
    exact_shadow: bool,
    /// Replay speed for record files; 0 keeps timestamps.
    #[arg(long, default_value_t = 0.0)]
    speed: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Samplers to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "oasrs,srs,sts")]
    sampler: Vec<SamplerKind>,
    #[arg(long, default_value = "fraction")]
    sweep: SweepVar,
    /// Sweep values, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")]
    values: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Budget when the sweep is not over fractions.
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    query: QueryArgs,
    /// Worker count when the sweep is not over workers.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Run trials concurrently (throughput figures become unreliable).
    #[arg(long)]
    parallel_trials: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Summary file; the per-window detail file is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for symmetry with `run`; bench always compares against an
    /// exact run.
    #[arg(long)]
    exact_shadow: bool,
}

/// A failure reported as one JSON line.
#[derive(Debug, Serialize)]
struct Failure {
    kind: &'static str,
    error: String,
    #[serde(skip)]
    code: u8,
    #[serde(skip)]
    broken_pipe: bool,
}

impl Failure {
    fn new(kind: &'static str, error: impl ToString) -> Self {
        Self {
            kind,
            error: error.to_string(),
            code: 1,
            broken_pipe: false,
        }
    }

    fn usage(error: impl ToString) -> Self {
        Self {
            code: 2,
            ..Self::new("usage", error)
        }
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new($kind, e)
            }
        })*
    };
}

failure_from! {
    stratified_stream::record::ConfigError => "config",
    stratified_stream::engine::EngineError => "engine",
    stratified_stream::workload::WorkloadError => "workload",
    stratified_stream::bench::BenchError => "bench",
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            broken_pipe: e.kind() == io::ErrorKind::BrokenPipe,
            ..Failure::new("io", e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return report(Failure::usage(first));
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Presets => cmd_presets(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (e.g. `| head`) is not a failure of this program.
        Err(f) if f.broken_pipe => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&f).expect("failure serializes"));
    ExitCode::from(f.code)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::new("io", format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn synthetic(args: &WorkloadArgs) -> Result<Option<WorkloadSpec>, Failure> {
    let mut spec = WorkloadSource::parse(&args.workload).spec()?;
    if let (Some(spec), Some(d)) = (spec.as_mut(), args.duration_secs) {
        spec.duration_secs = d;
        spec.validate()?;
    }
    Ok(spec)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut spec = synthetic(&args.workload)?.ok_or_else(|| {
        Failure::usage(format!("`{}` is not a preset or .toml workload", args.workload.workload))
    })?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let records = generate(&spec)?;
    let mut out = output(&args.out)?;
    let mut written = 0u64;
    for r in records {
        writeln!(out, "{r}")?;
        written += 1;
    }
    out.flush()?;
    if args.out.is_some() {
        eprintln!("{}", serde_json::json!({ "records": written }));
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let window = args.window.spec()?;
    let model = match args.model {
        Some(ModelArg::Batched) => ExecutionModel::Batched,
        Some(ModelArg::Pipelined) => ExecutionModel::Pipelined,
        None if args.workers > 1 => ExecutionModel::Batched,
        None => args.sampler.natural_model(),
    };
    let spec = synthetic(&args.workload)?.map(|s| WorkloadSpec { seed: args.seed, ..s });
    let initial = match &spec {
        Some(s) => (s.total_rate() * window.interval_ms as f64 / 1000.0).round() as u64,
        None => {
            // Counted in a first pass so the first interval is sized like
            // the ones after it.
            let mut records = replay(&args.workload.workload, args.speed)?;
            match records.next().transpose()? {
                None => 0,
                Some(first) => {
                    let end = first.timestamp - first.timestamp % window.slide_ms + window.interval_ms;
                    let mut n = 1;
                    for r in records {
                        if r?.timestamp >= end {
                            break;
                        }
                        n += 1;
                    }
                    n
                }
            }
        }
    };
    let config = ExecutionConfig {
        model,
        sampler: args.sampler,
        window,
        budget: args.budget.budget(0.1)?,
        query: args.query.spec()?,
        seed: args.seed,
        target_error: args.target_error,
        interval_method: args.query.method()?,
        lateness_ms: args.lateness_ms,
        exact_shadow: args.exact_shadow,
        initial_interval_items: initial.max(1),
        workers: WorkerConfig::new(args.workers),
    };
    let mut engine = StreamEngine::new(config)?;
    let mut out = output(&args.out)?;
    let mut writer = RowWriter::new(args.format);
    match spec {
        Some(spec) => {
            for r in generate(&spec)? {
                engine.push(&r)?;
                writer.drain(&mut engine, &mut out)?;
            }
        }
        None => {
            for r in replay(&args.workload.workload, args.speed)? {
                engine.push(&r?)?;
                writer.drain(&mut engine, &mut out)?;
            }
        }
    }
    let names: Vec<_> = (0..engine.interner().len() as u32)
        .filter_map(|i| engine.interner().name(stratified_stream::StratumId(i)).cloned())
        .collect();
    let final_budget = engine.budget();
    let result = engine.finish()?;
    for w in &result.windows {
        writer.write(&w.to_row(&names), &mut out)?;
    }
    out.flush()?;
    eprintln!("{}", serde_json::json!({ "stats": result.stats, "final_budget": final_budget }));
    Ok(())
}

struct RowWriter {
    format: FormatArg,
    header_done: bool,
}

impl RowWriter {
    fn new(format: FormatArg) -> Self {
        Self {
            format,
            header_done: false,
        }
    }

    fn drain(&mut self, engine: &mut StreamEngine, out: &mut dyn Write) -> Result<(), Failure> {
        let results = engine.drain_results();
        if results.is_empty() {
            return Ok(());
        }
        let names: Vec<_> = (0..engine.interner().len() as u32)
            .filter_map(|i| engine.interner().name(stratified_stream::StratumId(i)).cloned())
            .collect();
        for w in &results {
            self.write(&w.to_row(&names), out)?;
        }
        Ok(())
    }

    fn write(&mut self, row: &stratified_stream::engine::WindowRow, out: &mut dyn Write) -> Result<(), Failure> {
        match self.format {
            FormatArg::Json => {
                serde_json::to_writer(&mut *out, row).map_err(|e| Failure::new("io", e))?;
                writeln!(out)?;
            }
            FormatArg::Csv => {
                if !self.header_done {
                    writeln!(out, "window_start,window_end,estimate,variance,ci_low,ci_high,exact,accuracy_loss,items_processed,items_sampled,processing_ms")?;
                    self.header_done = true;
                }
                let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    row.window_start,
                    row.window_end,
                    opt(row.estimate),
                    opt(row.variance),
                    opt(row.ci_low),
                    opt(row.ci_high),
                    opt(row.exact),
                    opt(row.accuracy_loss),
                    row.items_processed,
                    row.items_sampled,
                    row.processing_ms
                )?;
            }
        }
        Ok(())
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut plan = ExperimentPlan::new(WorkloadSource::parse(&args.workload.workload));
    plan.samplers = args.sampler;
    plan.sweep = args.sweep;
    plan.values = args.values;
    plan.trials = args.trials;
    plan.seed_base = args.seed;
    plan.duration_secs = args.workload.duration_secs;
    plan.parallel_trials = args.parallel_trials;
    plan.output = args.out.clone();
    plan.base.window = args.window.spec()?;
    plan.base.budget = args.budget.budget(0.6)?;
    plan.base.query = args.query.spec()?;
    plan.base.interval_method = args.query.method()?;
    plan.base.workers = WorkerConfig::new(args.workers);
    plan.validate()?;
    if let Some(parent) = args.out.as_ref().and_then(|p| p.parent()).filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Failure::new("io", format!("{}: output directory does not exist", parent.display())));
        }
    }

    let result = bench::run_experiment(&plan)?;
    let format = ReportFormat::from(args.format);
    let mut stdout = io::stdout().lock();
    match format {
        ReportFormat::Csv => write!(stdout, "{}", bench::summary_csv(&result))?,
        ReportFormat::Json => writeln!(stdout, "{}", bench::summary_json(&result))?,
    }
    stdout.flush()?;
    for f in &result.failures {
        eprintln!("{}", serde_json::json!({ "failed_cell": f }));
    }
    if let Some(path) = &args.out {
        let paths = emit_report(&result, format, path)?;
        eprintln!(
            "{}",
            serde_json::json!({ "summary": paths.summary, "detail": paths.detail })
        );
    }
    Ok(())
}

fn cmd_presets() -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    for name in PRESETS {
        let spec = preset(name)?;
        writeln!(out, "{}", serde_json::json!({ "name": name, "workload": spec }))?;
    }
    Ok(())
}
