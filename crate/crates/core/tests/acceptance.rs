//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line; the
//! target fails if any non-advisory criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{CompensatedSum, Odometer, SharedOdometer};
use rand::Rng;
use stratified_stream::bench::{first_interval_items, run_experiment, ExperimentPlan, WorkloadSource};
use stratified_stream::distributed::{merge_samples, DistributedSampler, WorkerConfig};
use stratified_stream::engine::{run_stream, ExecutionConfig, ExecutionModel, RunOutput, SamplerKind};
use stratified_stream::estimator::estimate_sum;
use stratified_stream::record::{Item, QueryBudget, Record, StratumId, StratumInterner, WindowSpec};
use stratified_stream::sampling::{derive_seed, seeded, OasrsSampler, Reservoir, WeightedSample};
use stratified_stream::workload::{generate, preset, Distribution, Interleaving, StratumSpec, WorkloadSpec};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    advisory: bool,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "reservoir uniformity", limit: Duration::from_secs(30), advisory: false, run: reservoir_uniformity },
        Criterion { id: 2, name: "exact-case identity", limit: Duration::from_secs(10), advisory: false, run: exact_case_identity },
        Criterion { id: 3, name: "unbiasedness by enumeration", limit: Duration::from_secs(60), advisory: false, run: unbiasedness_oracle },
        Criterion { id: 4, name: "accuracy-loss magnitude", limit: Duration::from_secs(300), advisory: false, run: accuracy_loss_magnitude },
        Criterion { id: 5, name: "skew ordering", limit: Duration::from_secs(600), advisory: false, run: skew_ordering },
        Criterion { id: 6, name: "error-bound coverage", limit: Duration::from_secs(600), advisory: false, run: error_bound_coverage },
        Criterion { id: 7, name: "memory bound", limit: Duration::from_secs(60), advisory: false, run: memory_bound },
        Criterion { id: 8, name: "throughput ordering", limit: Duration::from_secs(600), advisory: true, run: throughput_ordering },
        Criterion { id: 9, name: "distributed degeneracy and determinism", limit: Duration::from_secs(60), advisory: false, run: distributed_determinism },
    ];
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let ok = result.passed && in_time;
        let status = match (ok, c.advisory) {
            (true, _) => "PASS",
            (false, true) => "ADVISORY-FAIL",
            (false, false) => "FAIL",
        };
        let timing = if in_time { String::new() } else { format!(" [over the {:?} limit]", c.limit) };
        println!("{status} C{} {}: {} ({:.1}s){timing}", c.id, c.name, result.detail, elapsed.as_secs_f64());
        if !ok && !c.advisory {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn reservoir_uniformity() -> Outcome {
    let (n, capacity, trials) = (100usize, 10usize, 50_000u32);
    let mut hits = vec![0u32; n];
    let mut rng = seeded(1);
    for _ in 0..trials {
        let mut r = Reservoir::new(capacity).unwrap();
        for i in 0..n {
            r.offer(i, &mut rng);
        }
        for &i in r.items() {
            hits[i] += 1;
        }
    }
    let freq: Vec<f64> = hits.iter().map(|&h| h as f64 / trials as f64).collect();
    let worst = freq.iter().map(|f| (f - 0.10).abs()).fold(0.0, f64::max);
    let (lo, hi) = freq.iter().fold((1.0f64, 0.0f64), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    outcome(worst <= 0.02, format!("inclusion frequencies in [{lo:.4}, {hi:.4}], max deviation {worst:.4} (limit 0.02)"))
}

fn random_workload(rng: &mut impl Rng, seed: u64) -> WorkloadSpec {
    let strata = (0..rng.random_range(1..=4))
        .map(|i| {
            let distribution = match rng.random_range(0..3) {
                0 => {
                    let mean = rng.random_range(1.0..1000.0);
                    Distribution::Gaussian { mean, std_dev: rng.random_range(0.0..mean / 3.0) }
                }
                1 => Distribution::Poisson { lambda: rng.random_range(0.5..500.0) },
                _ => Distribution::Constant { value: rng.random_range(0.1..100.0) },
            };
            StratumSpec::new(format!("s{i}"), distribution, rng.random_range(1.0..300.0))
        })
        .collect();
    WorkloadSpec {
        strata,
        duration_secs: rng.random_range(1.0..25.0),
        seed,
        interleaving: if rng.random_bool(0.8) { Interleaving::ByTimestamp } else { Interleaving::RoundRobin },
    }
}

fn exact_case_identity() -> Outcome {
    let mut rng = seeded(2);
    let mut windows = 0usize;
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for w in 0..100u64 {
        let spec = random_workload(&mut rng, w);
        let records: Vec<Record> = generate(&spec).unwrap().collect();
        let interval = [500u64, 1000, 2500][rng.random_range(0..3)];
        let window = WindowSpec::new(interval * 4, interval * 2, interval).unwrap();
        let strata = spec.strata.len();
        let runs: [(SamplerKind, ExecutionModel, QueryBudget, usize); 6] = [
            // Equal per-stratum capacities need strata × items to guarantee
            // that every stratum fits.
            (SamplerKind::Oasrs, ExecutionModel::Pipelined, QueryBudget::AbsoluteSampleSize(strata * records.len().max(1)), 1),
            (SamplerKind::Oasrs, ExecutionModel::Batched, QueryBudget::AbsoluteSampleSize(strata * records.len().max(1)), 1),
            (SamplerKind::Oasrs, ExecutionModel::Batched, QueryBudget::AbsoluteSampleSize(2 * strata * records.len().max(1)), 2),
            (SamplerKind::Srs, ExecutionModel::Batched, QueryBudget::SamplingFraction(1.0), 1),
            (SamplerKind::Sts, ExecutionModel::Batched, QueryBudget::SamplingFraction(1.0), 1),
            (SamplerKind::None, ExecutionModel::Pipelined, QueryBudget::SamplingFraction(1.0), 1),
        ];
        for (sampler, model, budget, workers) in runs {
            let cfg = ExecutionConfig {
                sampler,
                model,
                budget,
                window,
                seed: w,
                exact_shadow: true,
                workers: WorkerConfig::new(workers),
                ..ExecutionConfig::default()
            };
            let out = run_stream(&records, &cfg).unwrap();
            for win in &out.windows {
                let report = win.report.as_ref().unwrap();
                let exact = win.exact.unwrap();
                let rel = if exact == 0.0 { report.point_estimate.abs() } else { (report.point_estimate - exact).abs() / exact.abs() };
                worst = worst.max(rel);
                windows += 1;
                if rel > 1e-12 || report.variance != 0.0 {
                    problems.push(format!("workload {w} {sampler}/{workers}w: rel {rel:e}, var {}", report.variance));
                }
            }
        }
    }
    let detail = format!("{windows} windows over 100 workloads, max relative error {worst:e} (limit 1e-12), variance 0");
    match problems.first() {
        None => outcome(true, detail),
        Some(p) => outcome(false, format!("{detail}; {} violations, first: {p}", problems.len())),
    }
}

/// Mean of the sum estimate over every reservoir outcome of a single
/// OASRS interval.
fn enumerate_single(items: &[(u32, f64)], total: usize, declare: bool) -> (f64, usize) {
    let mut odo = Odometer::new();
    let mut mean = CompensatedSum::default();
    let mut mass = CompensatedSum::default();
    let mut paths = 0;
    loop {
        odo.start();
        let mut s = OasrsSampler::new(total).unwrap();
        if declare {
            s.declare_strata(items.iter().map(|&(id, _)| StratumId(id)));
        }
        for &(id, v) in items {
            s.offer(StratumId(id), v, &mut odo);
        }
        let sample = s.close_interval(0, 1);
        let p = odo.probability();
        mean.add(p * estimate_sum(&sample.entries));
        mass.add(p);
        paths += 1;
        if !odo.advance() {
            break;
        }
    }
    assert!((mass.value() - 1.0).abs() < 1e-12, "path probabilities sum to {}", mass.value());
    (mean.value(), paths)
}

/// Same for the merged estimate of `workers` workers sharing one odometer.
fn enumerate_distributed(items: &[(u32, f64)], total: usize, workers: usize, declare: bool) -> (f64, usize) {
    let shared = SharedOdometer::default();
    let records: Vec<Item> = items
        .iter()
        .enumerate()
        .map(|(t, &(id, value))| Item { timestamp: t as u64, stratum: StratumId(id), value })
        .collect();
    let mut mean = CompensatedSum::default();
    let mut paths = 0;
    let order: Vec<usize> = (0..workers).collect();
    loop {
        shared.0.borrow_mut().start();
        let mut d = DistributedSampler::new(WorkerConfig::new(workers), total, vec![shared.clone(); workers]).unwrap();
        if declare {
            // A first interval teaches every worker the full stratum set.
            let warmup: Vec<Item> = {
                let mut ids: Vec<u32> = items.iter().map(|&(id, _)| id).collect();
                ids.sort_unstable();
                ids.dedup();
                ids.iter().flat_map(|&id| (0..workers).map(move |_| Item { timestamp: 0, stratum: StratumId(id), value: 0.0 })).collect()
            };
            let saved = std::mem::take(&mut *shared.0.borrow_mut());
            d.sample_interval_in_order(&warmup, 0, 1, &order).unwrap();
            *shared.0.borrow_mut() = saved;
            shared.0.borrow_mut().start();
        }
        let locals = d.sample_interval_in_order(&records, 0, records.len() as u64, &order).unwrap();
        let merged = merge_samples(&locals).unwrap();
        let p = shared.0.borrow().probability();
        mean.add(p * estimate_sum(&merged.entries));
        paths += 1;
        if !shared.0.borrow_mut().advance() {
            break;
        }
    }
    (mean.value(), paths)
}

fn interleave(counts: &[usize], rng: &mut impl Rng) -> Vec<(u32, f64)> {
    let mut items: Vec<(u32, f64)> = counts
        .iter()
        .enumerate()
        .flat_map(|(id, &c)| (0..c).map(move |k| (id as u32, (id * 10 + k) as f64)))
        .collect();
    for (i, item) in items.iter_mut().enumerate() {
        item.1 = (item.1 + 1.0) * (1.0 + (i % 7) as f64 / 3.0);
    }
    // Deterministic shuffle preserving nothing in particular.
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
    items
}

fn unbiasedness_oracle() -> Outcome {
    let mut rng = seeded(3);
    let mut worst = 0.0f64;
    let mut total_paths = 0usize;
    let mut cases = 0;
    let mut fail = None;
    let mut check = |label: String, mean: f64, exact: f64, paths: usize| {
        let err = (mean - exact).abs();
        worst = worst.max(err);
        total_paths += paths;
        cases += 1;
        if err > 1e-9 && fail.is_none() {
            fail = Some(format!("{label}: enumerated mean {mean} vs exact {exact}"));
        }
    };
    // (counts per stratum, total budget): per-stratum capacities stay <= 3.
    let single: [(&[usize], usize); 7] = [
        (&[5], 2),
        (&[5, 4], 6),
        (&[5, 5, 5], 3),
        (&[5, 4, 5], 9),
        (&[5, 5, 4], 7),
        (&[3, 5, 2], 4),
        (&[5, 1, 4], 5),
    ];
    for (counts, total) in single {
        for declare in [true, false] {
            let items = interleave(counts, &mut rng);
            let exact: f64 = items.iter().map(|i| i.1).sum();
            let (mean, paths) = enumerate_single(&items, total, declare);
            check(format!("single {counts:?} N={total} declared={declare}"), mean, exact, paths);
        }
    }
    // Two workers, round-robin routing: at most 4 items per stratum per worker.
    let distributed: [(&[usize], usize); 5] = [(&[8, 6], 4), (&[8, 6], 8), (&[5, 7, 4], 6), (&[8, 3, 2], 3), (&[4, 4, 4], 12)];
    for (counts, total) in distributed {
        for declare in [true, false] {
            let items = interleave(counts, &mut rng);
            let exact: f64 = items.iter().map(|i| i.1).sum();
            let (mean, paths) = enumerate_distributed(&items, total, 2, declare);
            check(format!("2 workers {counts:?} N={total} declared={declare}"), mean, exact, paths);
        }
    }
    let detail = format!("{cases} instances, {total_paths} equiprobable-weighted outcomes, max |E[est] - exact| = {worst:e} (limit 1e-9)");
    match fail {
        None => outcome(true, detail),
        Some(f) => outcome(false, format!("{detail}; {f}")),
    }
}

fn plan(name: &str, samplers: Vec<SamplerKind>, trials: usize) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(WorkloadSource::Preset(name.into()));
    plan.samplers = samplers;
    plan.values = vec![0.6];
    plan.trials = trials;
    plan.seed_base = 42;
    plan
}

fn mean_loss(result: &stratified_stream::bench::ExperimentResult, sampler: SamplerKind) -> f64 {
    let losses: Vec<f64> = result.runs.iter().filter(|r| r.sampler == sampler).filter_map(|r| r.mean_loss).collect();
    losses.iter().sum::<f64>() / losses.len() as f64
}

fn accuracy_loss_magnitude() -> Outcome {
    let result = run_experiment(&plan("gaussian3", vec![SamplerKind::Oasrs], 10)).unwrap();
    if !result.failures.is_empty() {
        return outcome(false, format!("failed runs: {:?}", result.failures));
    }
    let loss = mean_loss(&result, SamplerKind::Oasrs);
    outcome(loss <= 0.01, format!("gaussian3, fraction 0.6, 10 trials: OASRS mean sum loss {:.4}% (limit 1%)", loss * 100.0))
}

fn skew_ordering() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["skew_gaussian", "skew_poisson"] {
        let result = run_experiment(&plan(name, vec![SamplerKind::Oasrs, SamplerKind::Srs, SamplerKind::Sts], 20)).unwrap();
        if !result.failures.is_empty() {
            return outcome(false, format!("{name}: failed runs: {:?}", result.failures));
        }
        let (o, s, t) = (mean_loss(&result, SamplerKind::Oasrs), mean_loss(&result, SamplerKind::Srs), mean_loss(&result, SamplerKind::Sts));
        ok &= o < s && t <= s;
        parts.push(format!("{name}: oasrs {:.4}% sts {:.4}% srs {:.4}%", o * 100.0, t * 100.0, s * 100.0));
    }
    outcome(ok, format!("{} (need oasrs < srs, sts <= srs)", parts.join("; ")))
}

fn error_bound_coverage() -> Outcome {
    let mut spec = preset("gaussian3").unwrap();
    spec.duration_secs = 10.0;
    let trials = 1000u64;
    let mut covered = 0;
    for trial in 0..trials {
        let records: Vec<Record> = generate(&spec.with_seed(derive_seed(7, trial))).unwrap().collect();
        let window = WindowSpec::default();
        let cfg = ExecutionConfig {
            budget: QueryBudget::SamplingFraction(0.6),
            initial_interval_items: first_interval_items(&records, &window),
            window,
            seed: trial,
            exact_shadow: true,
            ..ExecutionConfig::default()
        };
        let out = run_stream(&records, &cfg).unwrap();
        let w = &out.windows[0];
        let r = w.report.as_ref().unwrap();
        if r.ci_low <= w.exact.unwrap() && w.exact.unwrap() <= r.ci_high {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    outcome(rate >= 0.93, format!("exact sum inside the 2σ interval in {covered}/{trials} trials ({:.1}%, need >= 93%)", rate * 100.0))
}

fn one_interval_stream(n: u64) -> Vec<Record> {
    let names = ["a", "b", "c"];
    let mut rng = seeded(8);
    (0..n)
        .map(|i| {
            let s = names[(i % 3) as usize];
            Record::new(i * 10_000 / n, s, rng.random_range(0.0..100.0)).unwrap()
        })
        .collect()
}

fn memory_bound() -> Outcome {
    let records = one_interval_stream(1_000_000);
    let window = WindowSpec::new(10_000, 10_000, 10_000).unwrap();
    let run = |sampler, model| {
        let cfg = ExecutionConfig {
            sampler,
            model,
            window,
            budget: QueryBudget::AbsoluteSampleSize(1000),
            ..ExecutionConfig::default()
        };
        run_stream(&records, &cfg).unwrap()
    };
    let oasrs = run(SamplerKind::Oasrs, ExecutionModel::Pipelined);
    let sts = run(SamplerKind::Sts, ExecutionModel::Batched);
    let (o, s) = (oasrs.stats.peak_retained, sts.stats.peak_retained);
    outcome(
        o <= 1000 && s >= 1_000_000 && oasrs.stats.intervals_closed == 1,
        format!("10^6 records in one interval, budget 1000: OASRS peak {o} (limit 1000 + 0), STS peak {s} (need >= 10^6)"),
    )
}

fn best_throughput(records: &[Record], cfg: &ExecutionConfig, runs: usize) -> f64 {
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            let out: RunOutput = run_stream(records, cfg).unwrap();
            out.stats.items_ingested as f64 / start.elapsed().as_secs_f64()
        })
        .fold(0.0, f64::max)
}

fn throughput_ordering() -> Outcome {
    let records: Vec<Record> = generate(&preset("gaussian3").unwrap()).unwrap().collect();
    let window = WindowSpec::default();
    let cfg = |sampler: SamplerKind| ExecutionConfig {
        sampler,
        model: sampler.natural_model(),
        window,
        budget: QueryBudget::SamplingFraction(0.1),
        initial_interval_items: first_interval_items(&records, &window),
        ..ExecutionConfig::default()
    };
    let oasrs = best_throughput(&records, &cfg(SamplerKind::Oasrs), 5);
    let none = best_throughput(&records, &cfg(SamplerKind::None), 5);
    let sts = best_throughput(&records, &cfg(SamplerKind::Sts), 5);
    let (vs_none, vs_sts) = (oasrs / none, oasrs / sts);
    outcome(
        vs_none >= 1.5 && vs_sts >= 1.3,
        format!(
            "items/s: oasrs {:.2e}, none {:.2e}, sts {:.2e}; oasrs/none {vs_none:.2} (want >= 1.5), oasrs/sts {vs_sts:.2} (want >= 1.3)",
            oasrs, none, sts
        ),
    )
}

fn samples_identical(a: &WeightedSample, b: &WeightedSample) -> bool {
    a.interval_start == b.interval_start
        && a.interval_end == b.interval_end
        && a.entries.len() == b.entries.len()
        && a.entries.iter().zip(&b.entries).all(|(x, y)| {
            x.stratum == y.stratum
                && x.counter == y.counter
                && x.weight.to_bits() == y.weight.to_bits()
                && x.items.len() == y.items.len()
                && x.items.iter().zip(&y.items).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

fn distributed_determinism() -> Outcome {
    let mut spec = preset("gaussian3").unwrap();
    spec.duration_secs = 30.0;
    let records: Vec<Record> = generate(&spec).unwrap().collect();
    let mut interner = StratumInterner::new();
    let items: Vec<Item> = records.iter().map(|r| interner.item(r)).collect();
    let interval = 5_000u64;
    let mut intervals: BTreeMap<u64, Vec<Item>> = BTreeMap::new();
    for it in &items {
        intervals.entry(it.timestamp / interval).or_default().push(*it);
    }

    // One worker against the single-context sampler, interval by interval.
    let seed = 11;
    let total = 1500;
    let mut single_rng = seeded(seed);
    let mut known: Vec<StratumId> = Vec::new();
    let mut one = DistributedSampler::seeded(WorkerConfig::new(1), total, seed).unwrap();
    let mut degenerate_ok = true;
    for (&k, batch) in &intervals {
        let (start, end) = (k * interval, (k + 1) * interval);
        let mut s = OasrsSampler::new(total).unwrap();
        s.declare_strata(known.iter().copied());
        s.start_interval(total).unwrap();
        for it in batch {
            s.offer(it.stratum, it.value, &mut single_rng);
        }
        let single = s.close_interval(start, end);
        known = s.known_strata().to_vec();
        let merged = merge_samples(&one.sample_interval(batch, start, end).unwrap()).unwrap();
        degenerate_ok &= samples_identical(&single, &merged);
    }

    // The engine with one worker and the same seed goes through the
    // single-context path; its results must not depend on the model either.
    let base = ExecutionConfig {
        budget: QueryBudget::SamplingFraction(0.2),
        seed,
        initial_interval_items: first_interval_items(&records, &WindowSpec::default()),
        ..ExecutionConfig::default()
    };
    let pipelined = run_stream(&records, &base).unwrap();
    let batched = run_stream(&records, &ExecutionConfig { model: ExecutionModel::Batched, ..base.clone() }).unwrap();
    degenerate_ok &= pipelined.windows.iter().zip(&batched.windows).all(|(a, b)| a.report == b.report);

    // Two and four workers: repeated runs, scheduling orders and threads.
    let mut deterministic = true;
    for w in [2usize, 4] {
        let cfg = ExecutionConfig {
            model: ExecutionModel::Batched,
            workers: WorkerConfig::new(w),
            ..base.clone()
        };
        let a = run_stream(&records, &cfg).unwrap();
        let b = run_stream(&records, &cfg).unwrap();
        deterministic &= a.windows.len() == b.windows.len()
            && a.windows.iter().zip(&b.windows).all(|(x, y)| x.report == y.report && x.items_sampled == y.items_sampled);

        let orders: Vec<Vec<usize>> = vec![(0..w).collect(), (0..w).rev().collect(), {
            let mut o: Vec<usize> = (0..w).collect();
            o.rotate_left(1);
            o
        }];
        let mut threaded = DistributedSampler::seeded(WorkerConfig::new(w), total, seed).unwrap();
        let mut ordered: Vec<_> = orders.iter().map(|_| DistributedSampler::seeded(WorkerConfig::new(w), total, seed).unwrap()).collect();
        for (&k, batch) in &intervals {
            let (start, end) = (k * interval, (k + 1) * interval);
            let reference = merge_samples(&threaded.sample_interval(batch, start, end).unwrap()).unwrap();
            for (d, order) in ordered.iter_mut().zip(&orders) {
                let merged = merge_samples(&d.sample_interval_in_order(batch, start, end, order).unwrap()).unwrap();
                deterministic &= samples_identical(&reference, &merged);
            }
        }
    }
    outcome(
        degenerate_ok && deterministic,
        format!(
            "w=1 bit-identical to single context: {degenerate_ok}; w in {{2,4}} identical across runs, orders and threads: {deterministic}"
        ),
    )
}
