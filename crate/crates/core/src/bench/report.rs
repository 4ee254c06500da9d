use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BenchError, ExperimentResult, SummaryRow};
use crate::engine::{SamplerKind, WindowRow};

pub const SUMMARY_HEADER: [&str; 9] = [
    "sampler",
    "sweep_var",
    "sweep_value",
    "trials",
    "throughput_mean",
    "throughput_sd",
    "loss_mean",
    "loss_sd",
    "peak_retained",
];

pub const DETAIL_HEADER: [&str; 16] = [
    "sampler",
    "sweep_value",
    "trial",
    "seed",
    "window_start",
    "window_end",
    "estimate",
    "variance",
    "ci_low",
    "ci_high",
    "exact",
    "accuracy_loss",
    "items_processed",
    "items_sampled",
    "processing_ms",
    "throughput",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown format `{s}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub detail: PathBuf,
}

/// `results.csv` -> `results.windows.csv`; `results.json` ->
/// `results.windows.jsonl`.
pub fn detail_path(summary: &Path, format: ReportFormat) -> PathBuf {
    let stem = summary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = match format {
        ReportFormat::Json => "jsonl",
        ReportFormat::Csv => "csv",
    };
    summary.with_file_name(format!("{stem}.windows.{ext}"))
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    workload: &'a str,
    sweep: super::SweepVar,
    values: &'a [f64],
    samplers: &'a [SamplerKind],
    trials: usize,
    seed_base: u64,
    summary: Vec<SummaryRow>,
    failures: &'a [super::FailedCell],
}

#[derive(Serialize)]
struct JsonDetail<'a> {
    sampler: SamplerKind,
    sweep_value: f64,
    trial: usize,
    seed: u64,
    #[serde(flatten)]
    window: &'a WindowRow,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_record(row: &SummaryRow) -> [String; 9] {
    [
        row.sampler.to_string(),
        row.sweep_var.to_string(),
        row.sweep_value.to_string(),
        row.trials.to_string(),
        row.throughput_mean.to_string(),
        row.throughput_sd.to_string(),
        opt(row.loss_mean),
        opt(row.loss_sd),
        row.peak_retained.to_string(),
    ]
}

/// The CSV summary table as text.
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for row in result.summary() {
        w.write_record(summary_record(&row)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// The JSON summary object as text.
pub fn summary_json(result: &ExperimentResult) -> String {
    serde_json::to_string_pretty(&JsonSummary {
        workload: &result.workload,
        sweep: result.sweep,
        values: &result.values,
        samplers: &result.samplers,
        trials: result.trials,
        seed_base: result.seed_base,
        summary: result.summary(),
        failures: &result.failures,
    })
    .expect("summary serializes")
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    File::create(path).map(BufWriter::new).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes the summary to `summary` and the per-window rows next to it (see
/// [`detail_path`]). An empty result gives header-only CSV files, or an
/// empty summary list and an empty detail file for JSON.
pub fn emit_report(result: &ExperimentResult, format: ReportFormat, summary: &Path) -> Result<ReportPaths, BenchError> {
    let detail = detail_path(summary, format);
    let mut summary_out = create(summary)?;
    let mut detail_out = create(&detail)?;
    match format {
        ReportFormat::Json => {
            writeln!(summary_out, "{}", summary_json(result)).map_err(io_err(summary))?;
            for run in &result.runs {
                for window in &run.windows {
                    let row = JsonDetail {
                        sampler: run.sampler,
                        sweep_value: run.sweep_value,
                        trial: run.trial,
                        seed: run.seed,
                        window,
                    };
                    serde_json::to_writer(&mut detail_out, &row).map_err(|e| io_err(&detail)(e.into()))?;
                    detail_out.write_all(b"\n").map_err(io_err(&detail))?;
                }
            }
        }
        ReportFormat::Csv => {
            summary_out.write_all(summary_csv(result).as_bytes()).map_err(io_err(summary))?;
            let mut w = csv::Writer::from_writer(&mut detail_out);
            w.write_record(DETAIL_HEADER).map_err(csv_err(&detail))?;
            for run in &result.runs {
                for row in &run.windows {
                    w.write_record([
                        run.sampler.to_string(),
                        run.sweep_value.to_string(),
                        run.trial.to_string(),
                        run.seed.to_string(),
                        row.window_start.to_string(),
                        row.window_end.to_string(),
                        opt(row.estimate),
                        opt(row.variance),
                        opt(row.ci_low),
                        opt(row.ci_high),
                        opt(row.exact),
                        opt(row.accuracy_loss),
                        row.items_processed.to_string(),
                        row.items_sampled.to_string(),
                        row.processing_ms.to_string(),
                        run.throughput.to_string(),
                    ])
                    .map_err(csv_err(&detail))?;
                }
            }
            w.flush().map_err(io_err(&detail))?;
        }
    }
    summary_out.flush().map_err(io_err(summary))?;
    detail_out.flush().map_err(io_err(&detail))?;
    Ok(ReportPaths {
        summary: summary.to_path_buf(),
        detail,
    })
}
