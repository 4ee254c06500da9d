//! Approximate windowed aggregation over stratified data streams.
//!
//! Records from several sub-streams (strata) arrive in event-time order. For
//! every tumbling interval the stratified reservoir sampler keeps a bounded
//! uniform sample per stratum together with a weight saying how many
//! original records each sampled one stands for. Sliding-window queries
//! (sum, mean, count, histogram) are answered from those weighted samples,
//! with a variance estimate and a confidence interval.
//!
//! ```
//! use stratified_stream::engine::{run_stream, ExecutionConfig};
//! use stratified_stream::record::QueryBudget;
//! use stratified_stream::workload::{generate, preset};
//!
//! let mut spec = preset("gaussian3").unwrap();
//! spec.duration_secs = 20.0;
//! let records: Vec<_> = generate(&spec).unwrap().collect();
//!
//! let config = ExecutionConfig {
//!     budget: QueryBudget::fraction(0.2).unwrap(),
//!     initial_interval_items: 15_000,
//!     exact_shadow: true,
//!     ..ExecutionConfig::default()
//! };
//! let out = run_stream(&records, &config).unwrap();
//! assert_eq!(out.windows.len(), 3);
//! for w in &out.windows {
//!     assert!(w.accuracy_loss.unwrap() < 0.05);
//! }
//! ```
//!
//! Modules, from the bottom up:
//!
//! * [`record`]: records, the line format, window and budget settings.
//! * [`sampling`]: reservoirs, the stratified sampler, weights.
//! * [`estimator`]: point estimates, variances and error bounds.
//! * [`baselines`]: simple random and grouped stratified batch samplers.
//! * [`distributed`]: independent per-worker sampling and merging.
//! * [`engine`]: intervals, windows and execution models.
//! * [`workload`]: synthetic streams, presets, replay.
//! * [`bench`]: sampler comparison sweeps and reports.

pub mod record;
pub mod sampling;
pub mod estimator;
pub mod baselines;
pub mod distributed;
pub mod engine;
pub mod workload;
pub mod bench;

pub use engine::{run_stream, ExecutionConfig, ExecutionModel, SamplerKind, StreamEngine, WindowResult};
pub use estimator::{EstimateReport, IntervalMethod, SigmaRule};
pub use record::{parse_record, serialize_record, Aggregate, QueryBudget, QuerySpec, Record, StratumId, WindowSpec};
pub use sampling::{OasrsSampler, WeightedSample};
