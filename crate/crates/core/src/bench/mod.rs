//! Experiment sweeps comparing samplers on identical streams.
//!
//! For every sweep value and trial the workload is generated once; each
//! sampler then runs on that same stream, and its per-window estimates are
//! compared against an exact (`none`) run of the stream.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributed::WorkerConfig;
use crate::engine::{run_stream, EngineError, ExecutionConfig, ExecutionModel, RunOutput, SamplerKind, WindowRow};
use crate::record::{ConfigError, QueryBudget, Record, WindowSpec};
use crate::sampling::derive_seed;
use crate::workload::{generate, preset, read_records, WorkloadError, WorkloadSpec, PRESETS};

pub use report::{detail_path, emit_report, summary_csv, summary_json, ReportFormat, ReportPaths, DETAIL_HEADER, SUMMARY_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

/// The quantity varied across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Sampling fraction in (0, 1].
    Fraction,
    /// Window length in ms; slide and interval become half of it.
    Window,
    /// Whole-stream arrival rate in items per second.
    Rate,
    /// Worker count of the oasrs sampler.
    Workers,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Fraction => "fraction",
            SweepVar::Window => "window",
            SweepVar::Rate => "rate",
            SweepVar::Workers => "workers",
        }
    }

    fn check(self, v: f64) -> Result<(), String> {
        let ok = match self {
            SweepVar::Fraction => v > 0.0 && v <= 1.0,
            SweepVar::Window => v >= 2.0 && v.fract() == 0.0 && v % 2.0 == 0.0,
            SweepVar::Rate => v > 0.0 && v.is_finite(),
            SweepVar::Workers => v >= 1.0 && v.fract() == 0.0 && v <= 1024.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{v} is not a valid {} value", self.name()))
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SweepVar::Fraction, SweepVar::Window, SweepVar::Rate, SweepVar::Workers]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown sweep variable `{s}` (expected fraction, window, rate or workers)"))
    }
}

/// Where an experiment's stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    Preset(String),
    /// A TOML workload description.
    SpecFile(PathBuf),
    /// A record file, replayed as is.
    RecordFile(PathBuf),
}

impl WorkloadSource {
    /// A preset name, a `.toml` workload file, or any other path as a record
    /// file.
    pub fn parse(s: &str) -> Self {
        if PRESETS.contains(&s) {
            WorkloadSource::Preset(s.to_string())
        } else if s.ends_with(".toml") {
            WorkloadSource::SpecFile(PathBuf::from(s))
        } else {
            WorkloadSource::RecordFile(PathBuf::from(s))
        }
    }

    pub fn label(&self) -> String {
        match self {
            WorkloadSource::Preset(name) => name.clone(),
            WorkloadSource::SpecFile(p) | WorkloadSource::RecordFile(p) => p.display().to_string(),
        }
    }

    /// The synthetic spec behind this source, if any.
    pub fn spec(&self) -> Result<Option<WorkloadSpec>, WorkloadError> {
        match self {
            WorkloadSource::Preset(name) => preset(name).map(Some),
            WorkloadSource::SpecFile(p) => WorkloadSpec::load(p).map(Some),
            WorkloadSource::RecordFile(_) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub workload: WorkloadSource,
    pub samplers: Vec<SamplerKind>,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed_base: u64,
    /// Settings shared by every run; the sweep variable and sampler override
    /// their part of it.
    pub base: ExecutionConfig,
    /// Overrides the synthetic workload's duration.
    pub duration_secs: Option<f64>,
    /// Run the trials of a sweep point concurrently. Throughput numbers are
    /// then not meaningful.
    pub parallel_trials: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    /// A fraction sweep over 0.1..=0.8 with 10 trials, 10 s windows sliding
    /// by 5 s.
    pub fn new(workload: WorkloadSource) -> Self {
        Self {
            workload,
            samplers: vec![SamplerKind::Oasrs, SamplerKind::Srs, SamplerKind::Sts],
            sweep: SweepVar::Fraction,
            values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            trials: 10,
            seed_base: 0,
            base: ExecutionConfig::default(),
            duration_secs: None,
            parallel_trials: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let plan = |m: String| Err(BenchError::Plan(m));
        if self.trials == 0 {
            return plan("trials must be at least 1".into());
        }
        if self.values.is_empty() {
            return plan("sweep values must not be empty".into());
        }
        if self.samplers.is_empty() {
            return plan("at least one sampler is required".into());
        }
        for &v in &self.values {
            self.sweep.check(v).or_else(plan)?;
        }
        if let Some(d) = self.duration_secs {
            if !(d > 0.0 && d.is_finite()) {
                return plan(format!("duration must be positive, got {d}"));
            }
        }
        if self.sweep == SweepVar::Rate && matches!(self.workload, WorkloadSource::RecordFile(_)) {
            return plan("a rate sweep needs a synthetic workload".into());
        }
        Ok(())
    }
}

/// One sampler run on one (sweep value, trial) stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub sampler: SamplerKind,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// Items per second of wall time.
    pub throughput: f64,
    /// Mean accuracy loss over the windows where it is defined.
    pub mean_loss: Option<f64>,
    pub peak_retained: usize,
    pub wall_ms: f64,
    pub items: u64,
    pub windows: Vec<WindowRow>,
}

/// A run that could not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub sampler: Option<SamplerKind>,
    pub sweep_value: f64,
    pub trial: usize,
    pub error: String,
}

/// Aggregate over the trials of one (sampler, sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sampler: SamplerKind,
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub trials: usize,
    pub throughput_mean: f64,
    pub throughput_sd: f64,
    pub loss_mean: Option<f64>,
    pub loss_sd: Option<f64>,
    pub peak_retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub workload: String,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub samplers: Vec<SamplerKind>,
    pub trials: usize,
    pub seed_base: u64,
    pub runs: Vec<TrialResult>,
    pub failures: Vec<FailedCell>,
}

impl ExperimentResult {
    pub fn empty(plan: &ExperimentPlan) -> Self {
        Self {
            workload: plan.workload.label(),
            sweep: plan.sweep,
            values: plan.values.clone(),
            samplers: plan.samplers.clone(),
            trials: plan.trials,
            seed_base: plan.seed_base,
            runs: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Per (sampler, sweep value) means and standard deviations, in plan
    /// order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(usize, usize), Vec<&TrialResult>> = BTreeMap::new();
        for run in &self.runs {
            let v = self.values.iter().position(|v| *v == run.sweep_value).unwrap_or(usize::MAX);
            let s = self.samplers.iter().position(|s| *s == run.sampler).unwrap_or(usize::MAX);
            groups.entry((v, s)).or_default().push(run);
        }
        groups
            .into_values()
            .map(|runs| {
                let throughput: Vec<f64> = runs.iter().map(|r| r.throughput).collect();
                let loss: Vec<f64> = runs.iter().filter_map(|r| r.mean_loss).collect();
                let (throughput_mean, throughput_sd) = mean_sd(&throughput).unwrap_or((0.0, 0.0));
                let loss_stats = mean_sd(&loss);
                SummaryRow {
                    sampler: runs[0].sampler,
                    sweep_var: self.sweep,
                    sweep_value: runs[0].sweep_value,
                    trials: runs.len(),
                    throughput_mean,
                    throughput_sd,
                    loss_mean: loss_stats.map(|s| s.0),
                    loss_sd: loss_stats.map(|s| s.1),
                    peak_retained: runs.iter().map(|r| r.peak_retained).max().unwrap_or(0),
                }
            })
            .collect()
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

/// Number of records in the first interval of `records`, used to size the
/// first interval's sample when the budget is a fraction.
pub fn first_interval_items(records: &[Record], window: &WindowSpec) -> u64 {
    let Some(first) = records.first() else { return 0 };
    let origin = first.timestamp - first.timestamp % window.slide_ms;
    let end = origin + window.interval_ms;
    records.iter().take_while(|r| r.timestamp < end).count() as u64
}

/// Per-window accuracy loss of `approx` against an exact run of the same
/// stream. Windows are matched by their end; windows whose exact answer is
/// zero or undefined get no loss.
pub fn attach_losses(approx: &mut RunOutput, exact: &RunOutput) {
    let truth: BTreeMap<u64, f64> = exact
        .windows
        .iter()
        .filter_map(|w| w.estimate().map(|e| (w.window_end, e)))
        .collect();
    for w in &mut approx.windows {
        w.exact = truth.get(&w.window_end).copied();
        w.accuracy_loss = match (w.estimate(), w.exact) {
            (Some(a), Some(x)) if x != 0.0 => Some((a - x).abs() / x.abs()),
            _ => None,
        };
    }
}

fn configure(plan: &ExperimentPlan, sampler: SamplerKind, value: f64, seed: u64) -> Result<ExecutionConfig, BenchError> {
    let mut cfg = plan.base.clone();
    cfg.sampler = sampler;
    cfg.seed = seed;
    cfg.exact_shadow = false;
    cfg.model = sampler.natural_model();
    match plan.sweep {
        SweepVar::Fraction => cfg.budget = QueryBudget::fraction(value).map_err(config_err)?,
        SweepVar::Window => {
            let w = value as u64;
            cfg.window = WindowSpec::new(w, w / 2, w / 2).map_err(config_err)?;
        }
        SweepVar::Rate => {}
        SweepVar::Workers => {
            if sampler == SamplerKind::Oasrs {
                cfg.workers = WorkerConfig::new(value as usize);
            }
        }
    }
    if cfg.workers.workers > 1 {
        cfg.model = ExecutionModel::Batched;
    }
    if sampler != SamplerKind::Oasrs {
        cfg.workers = WorkerConfig::new(1);
    }
    Ok(cfg)
}

fn config_err(e: ConfigError) -> BenchError {
    BenchError::Engine(e.into())
}

fn timed_run(records: &[Record], cfg: &ExecutionConfig) -> Result<(RunOutput, f64), EngineError> {
    let start = Instant::now();
    let out = run_stream(records, cfg)?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn trial_stream(plan: &ExperimentPlan, spec: &Option<WorkloadSpec>, replayed: &Option<Vec<Record>>, value: f64, seed: u64) -> Result<Vec<Record>, BenchError> {
    match (spec, replayed) {
        (Some(spec), _) => {
            let mut spec = spec.with_seed(seed);
            if let Some(d) = plan.duration_secs {
                spec.duration_secs = d;
            }
            if plan.sweep == SweepVar::Rate {
                spec = spec.with_total_rate(value);
            }
            Ok(generate(&spec)?.collect())
        }
        (None, Some(records)) => Ok(records.clone()),
        (None, None) => unreachable!("a workload is either synthetic or replayed"),
    }
}

struct Cell {
    runs: Vec<TrialResult>,
    failures: Vec<FailedCell>,
}

fn run_cell(plan: &ExperimentPlan, spec: &Option<WorkloadSpec>, replayed: &Option<Vec<Record>>, value: f64, trial: usize) -> Cell {
    let seed = derive_seed(plan.seed_base, trial as u64);
    let mut cell = Cell {
        runs: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |sampler: Option<SamplerKind>, error: String| FailedCell {
        sampler,
        sweep_value: value,
        trial,
        error,
    };
    let records = match trial_stream(plan, spec, replayed, value, seed) {
        Ok(r) => r,
        Err(e) => {
            cell.failures.push(fail(None, e.to_string()));
            return cell;
        }
    };

    let prepare = |sampler| {
        configure(plan, sampler, value, seed).map(|mut cfg| {
            cfg.initial_interval_items = first_interval_items(&records, &cfg.window).max(1);
            cfg
        })
    };
    let exact = match prepare(SamplerKind::None).and_then(|cfg| Ok(timed_run(&records, &cfg)?)) {
        Ok(run) => run,
        Err(e) => {
            cell.failures.push(fail(Some(SamplerKind::None), e.to_string()));
            return cell;
        }
    };

    for &sampler in &plan.samplers {
        let outcome = if sampler == SamplerKind::None {
            Ok(exact.clone())
        } else {
            prepare(sampler).and_then(|cfg| Ok(timed_run(&records, &cfg)?))
        };
        match outcome {
            Ok((mut out, secs)) => {
                attach_losses(&mut out, &exact.0);
                let losses: Vec<f64> = out.windows.iter().filter_map(|w| w.accuracy_loss).collect();
                cell.runs.push(TrialResult {
                    sampler,
                    sweep_value: value,
                    trial,
                    seed,
                    throughput: out.stats.items_ingested as f64 / secs.max(1e-9),
                    mean_loss: mean_sd(&losses).map(|s| s.0),
                    peak_retained: out.stats.peak_retained,
                    wall_ms: secs * 1e3,
                    items: out.stats.items_ingested,
                    windows: out.rows().collect(),
                });
            }
            Err(e) => cell.failures.push(fail(Some(sampler), e.to_string())),
        }
    }
    cell
}

/// Runs every (sweep value, trial, sampler) combination of `plan`.
///
/// A failing run is recorded in [`ExperimentResult::failures`] and the
/// experiment moves on.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult, BenchError> {
    plan.validate()?;
    let spec = plan.workload.spec()?;
    let replayed = match &plan.workload {
        WorkloadSource::RecordFile(path) => Some(read_records(path, 0.0)?),
        _ => None,
    };
    let mut result = ExperimentResult::empty(plan);
    for &value in &plan.values {
        let cells: Vec<Cell> = if plan.parallel_trials {
            let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
            let trials: Vec<usize> = (0..plan.trials).collect();
            let mut cells = Vec::with_capacity(plan.trials);
            for chunk in trials.chunks(threads) {
                std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&t| {
                            let (spec, replayed) = (&spec, &replayed);
                            s.spawn(move || run_cell(plan, spec, replayed, value, t))
                        })
                        .collect();
                    cells.extend(handles.into_iter().map(|h| h.join().expect("trial thread panicked")));
                });
            }
            cells
        } else {
            (0..plan.trials).map(|t| run_cell(plan, &spec, &replayed, value, t)).collect()
        };
        for cell in cells {
            result.runs.extend(cell.runs);
            result.failures.extend(cell.failures);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Distribution, Interleaving, StratumSpec};

    fn small_plan() -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(WorkloadSource::Preset("gaussian3".into()));
        plan.duration_secs = Some(20.0);
        plan.trials = 2;
        plan.values = vec![0.5];
        plan
    }

    #[test]
    fn full_fraction_is_lossless() {
        let mut plan = small_plan();
        plan.values = vec![1.0];
        plan.samplers = vec![SamplerKind::Oasrs, SamplerKind::Srs, SamplerKind::Sts];
        let result = run_experiment(&plan).unwrap();
        assert!(result.failures.is_empty());
        for run in &result.runs {
            for w in &run.windows {
                assert!(w.accuracy_loss.unwrap() < 1e-12, "{:?} {w:?}", run.sampler);
            }
        }
    }

    #[test]
    fn samplers_see_the_same_stream() {
        let mut plan = small_plan();
        plan.samplers = vec![SamplerKind::Oasrs, SamplerKind::None];
        let result = run_experiment(&plan).unwrap();
        for trial in 0..2 {
            let per: Vec<Vec<u64>> = result
                .runs
                .iter()
                .filter(|r| r.trial == trial)
                .map(|r| r.windows.iter().map(|w| w.items_processed).collect())
                .collect();
            assert_eq!(per.len(), 2);
            assert_eq!(per[0], per[1]);
        }
        let none = result.runs.iter().filter(|r| r.sampler == SamplerKind::None);
        for run in none {
            assert!(run.windows.iter().all(|w| w.accuracy_loss == Some(0.0)));
        }
    }

    #[test]
    fn losses_are_reproducible() {
        let plan = small_plan();
        let a = run_experiment(&plan).unwrap();
        let b = run_experiment(&plan).unwrap();
        let loss = |r: &ExperimentResult| r.runs.iter().map(|t| t.mean_loss).collect::<Vec<_>>();
        assert_eq!(loss(&a), loss(&b));
    }

    #[test]
    fn parallel_trials_match_sequential() {
        let plan = small_plan();
        let mut par = plan.clone();
        par.parallel_trials = true;
        let loss = |r: &ExperimentResult| r.runs.iter().map(|t| (t.sampler, t.trial, t.mean_loss)).collect::<Vec<_>>();
        assert_eq!(loss(&run_experiment(&plan).unwrap()), loss(&run_experiment(&par).unwrap()));
    }

    #[test]
    fn failures_are_recorded() {
        let mut plan = small_plan();
        plan.sweep = SweepVar::Window;
        // A confidence level outside (0, 1) fails at the first window.
        plan.values = vec![10_000.0];
        plan.base.interval_method = crate::estimator::IntervalMethod::StudentT { confidence: 1.5 };
        let result = run_experiment(&plan).unwrap();
        assert!(!result.failures.is_empty());
        assert!(result.runs.is_empty());
    }

    #[test]
    fn summary_aggregates_trials() {
        let plan = small_plan();
        let result = run_experiment(&plan).unwrap();
        let summary = result.summary();
        assert_eq!(summary.len(), 3);
        assert_eq!(summary[0].sampler, SamplerKind::Oasrs);
        assert!(summary.iter().all(|s| s.trials == 2 && s.loss_mean.is_some()));
    }

    #[test]
    fn sweeps_apply() {
        let spec = WorkloadSpec {
            strata: vec![StratumSpec::new("a", Distribution::Constant { value: 1.0 }, 100.0)],
            duration_secs: 10.0,
            seed: 0,
            interleaving: Interleaving::ByTimestamp,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.toml");
        std::fs::write(&path, spec.to_toml()).unwrap();
        let mut plan = ExperimentPlan::new(WorkloadSource::SpecFile(path));
        plan.trials = 1;
        plan.samplers = vec![SamplerKind::Oasrs];
        plan.sweep = SweepVar::Rate;
        plan.values = vec![100.0, 200.0];
        let result = run_experiment(&plan).unwrap();
        let items: Vec<u64> = result.runs.iter().map(|r| r.items).collect();
        assert_eq!(items, vec![1000, 2000]);

        plan.sweep = SweepVar::Window;
        plan.values = vec![2_000.0];
        let result = run_experiment(&plan).unwrap();
        let w = &result.runs[0].windows[0];
        assert_eq!(w.window_end - w.window_start, 2_000);

        plan.sweep = SweepVar::Workers;
        plan.values = vec![3.0];
        assert!(run_experiment(&plan).unwrap().failures.is_empty());
    }

    #[test]
    fn plan_validation() {
        let mut plan = small_plan();
        plan.trials = 0;
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.values = vec![];
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.values = vec![1.5];
        assert!(plan.validate().is_err());
        let mut plan = small_plan();
        plan.workload = WorkloadSource::parse("records.csv");
        plan.sweep = SweepVar::Rate;
        plan.values = vec![10.0];
        assert!(plan.validate().is_err());
    }

    #[test]
    fn source_parsing() {
        assert_eq!(WorkloadSource::parse("poisson3"), WorkloadSource::Preset("poisson3".into()));
        assert!(matches!(WorkloadSource::parse("x.toml"), WorkloadSource::SpecFile(_)));
        assert!(matches!(WorkloadSource::parse("x.csv"), WorkloadSource::RecordFile(_)));
    }

    #[test]
    fn sd_of_known_values() {
        let (m, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[3.0]), Some((3.0, 0.0)));
        assert_eq!(mean_sd(&[]), None);
    }
}
