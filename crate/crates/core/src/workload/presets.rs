use super::{Distribution, Interleaving, StratumSpec, WorkloadError, WorkloadSpec};

pub const PRESETS: [&str; 4] = ["gaussian3", "poisson3", "skew_gaussian", "skew_poisson"];

/// Per-stratum rate of the equal-rate presets.
const EQUAL_RATE: f64 = 1000.0;
/// Whole-stream rate of the skewed presets.
const SKEW_TOTAL_RATE: f64 = 20_000.0;
const DURATION_SECS: f64 = 60.0;

fn gaussian(mean: f64, std_dev: f64) -> Distribution {
    Distribution::Gaussian { mean, std_dev }
}

fn poisson(lambda: f64) -> Distribution {
    Distribution::Poisson { lambda }
}

fn equal(dists: [Distribution; 3]) -> Vec<StratumSpec> {
    ["A", "B", "C"]
        .into_iter()
        .zip(dists)
        .map(|(id, d)| StratumSpec::new(id, d, EQUAL_RATE))
        .collect()
}

fn skewed(dists: [Distribution; 3], shares: [f64; 3]) -> Vec<StratumSpec> {
    ["A", "B", "C"]
        .into_iter()
        .zip(dists)
        .zip(shares)
        .map(|((id, d), share)| StratumSpec {
            share: Some(share),
            ..StratumSpec::new(id, d, share * SKEW_TOTAL_RATE)
        })
        .collect()
}

/// The named evaluation workloads: three sub-streams A, B, C.
///
/// | name | values | rates |
/// |---|---|---|
/// | `gaussian3` | N(10, 5), N(1000, 50), N(10000, 500) | 1000/s each |
/// | `poisson3` | Poisson(10), Poisson(1000), Poisson(10^8) | 1000/s each |
/// | `skew_gaussian` | N(100, 10), N(1000, 100), N(10000, 1000) | 80% / 19% / 1% of 20000/s |
/// | `skew_poisson` | as `poisson3` | 80% / 19.99% / 0.01% of 20000/s |
///
/// All run for 60 s with seed 0.
pub fn preset(name: &str) -> Result<WorkloadSpec, WorkloadError> {
    let strata = match name {
        "gaussian3" => equal([gaussian(10.0, 5.0), gaussian(1000.0, 50.0), gaussian(10000.0, 500.0)]),
        "poisson3" => equal([poisson(10.0), poisson(1000.0), poisson(1e8)]),
        "skew_gaussian" => skewed(
            [gaussian(100.0, 10.0), gaussian(1000.0, 100.0), gaussian(10000.0, 1000.0)],
            [0.80, 0.19, 0.01],
        ),
        "skew_poisson" => skewed([poisson(10.0), poisson(1000.0), poisson(1e8)], [0.80, 0.1999, 0.0001]),
        _ => return Err(WorkloadError::UnknownPreset { name: name.to_string() }),
    };
    Ok(WorkloadSpec {
        strata,
        duration_secs: DURATION_SECS,
        seed: 0,
        interleaving: Interleaving::ByTimestamp,
    })
}
