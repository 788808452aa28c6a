//! Function catalog and seeded request scenarios.
//!
//! A scenario issues a fixed number of calls per function at times drawn
//! uniformly over a window (60 s by default). The number of calls follows
//! the intensity model: `1.1 * cores * intensity` requests, which is an
//! exact integer and splits evenly over the eleven catalog functions
//! whenever the intensity is a multiple of 10.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::time::Micros;

/// Standard normal quantile at 0.95.
const Z95: f64 = 1.644_853_626_951_472_2;

/// Latency quantiles of one function measured on an idle node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionProfile {
    pub name: String,
    pub p05: Micros,
    pub median: Micros,
    pub p95: Micros,
}

impl FunctionProfile {
    pub fn new(name: impl Into<String>, p05: Micros, median: Micros, p95: Micros) -> Result<Self> {
        let profile = FunctionProfile {
            name: name.into(),
            p05,
            median,
            p95,
        };
        profile.validate()?;
        Ok(profile)
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason| {
            Err(Error::InvalidProfile {
                name: self.name.clone(),
                reason,
            })
        };
        if self.name.is_empty() {
            return fail("empty name");
        }
        if self.p05 == Micros::ZERO {
            return fail("quantiles must be strictly positive");
        }
        if !(self.p05 <= self.median && self.median <= self.p95) {
            return fail("quantiles must satisfy p05 <= median <= p95");
        }
        Ok(())
    }
}

/// Ordered set of functions a node can execute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCatalog {
    profiles: Vec<FunctionProfile>,
}

/// Idle-node client-side response times (ms): name, p05, median, p95.
const SEBS_TABLE: [(&str, u64, u64, u64); 11] = [
    ("dna-visualisation", 8415, 8552, 8847),
    ("sleep", 1020, 1022, 1026),
    ("compression", 793, 807, 832),
    ("video-processing", 586, 593, 605),
    ("uploader", 184, 192, 405),
    ("image-recognition", 117, 121, 237),
    ("thumbnailer", 112, 118, 124),
    ("dynamic-html", 18, 19, 22),
    ("graph-pagerank", 11, 12, 15),
    ("graph-bfs", 11, 12, 13),
    ("graph-mst", 11, 12, 13),
];

impl FunctionCatalog {
    pub fn new(profiles: Vec<FunctionProfile>) -> Result<Self> {
        for (i, p) in profiles.iter().enumerate() {
            p.validate()?;
            if profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::DuplicateFunction(p.name.clone()));
            }
        }
        Ok(FunctionCatalog { profiles })
    }

    /// The eleven SeBS functions with their idle-node quantiles.
    pub fn sebs() -> Self {
        let profiles = SEBS_TABLE
            .iter()
            .map(|&(name, p05, median, p95)| FunctionProfile {
                name: name.to_string(),
                p05: Micros::from_ms(p05),
                median: Micros::from_ms(median),
                p95: Micros::from_ms(p95),
            })
            .collect();
        FunctionCatalog { profiles }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[FunctionProfile] {
        &self.profiles
    }

    pub fn get(&self, index: usize) -> Result<&FunctionProfile> {
        self.profiles.get(index).ok_or(Error::UnknownFunctionIndex(index))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.profiles
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))
    }

    /// Copy of the catalog with a constant per-call overhead removed from
    /// every quantile. Quantiles never drop below 1 us.
    pub fn with_overhead_removed(&self, overhead: Micros) -> Self {
        let strip = |t: Micros| Micros(t.0.saturating_sub(overhead.0).max(1));
        let profiles = self
            .profiles
            .iter()
            .map(|p| FunctionProfile {
                name: p.name.clone(),
                p05: strip(p.p05),
                median: strip(p.median),
                p95: strip(p.p95),
            })
            .collect();
        FunctionCatalog { profiles }
    }
}

/// One generated call: generation time `r(i)` and the function it invokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arrival {
    pub gen_time: Micros,
    pub function: usize,
}

/// A seeded request sequence, sorted by generation time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub arrivals: Vec<Arrival>,
    pub window: Micros,
    pub seed: u64,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Number of arrivals per catalog index.
    pub fn counts(&self, functions: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; functions];
        for a in &self.arrivals {
            counts[a.function] += 1;
        }
        counts
    }
}

/// Number of requests for a scenario: `1.1 * cores * intensity`.
pub fn scenario_size(cores: u32, intensity: u32) -> Result<u64> {
    if cores == 0 {
        return Err(Error::InvalidCores);
    }
    if !intensity.is_multiple_of(10) {
        return Err(Error::InvalidIntensity(intensity));
    }
    Ok(11 * cores as u64 * (intensity as u64 / 10))
}

/// Inverse of [`scenario_size`]: the intensity at which `total_cores`
/// receive `requests`, if it is a whole multiple of 10.
pub fn intensity_for(requests: u64, total_cores: u32) -> Option<u32> {
    let per_step = 11 * total_cores as u64;
    if total_cores == 0 || !requests.is_multiple_of(per_step) {
        return None;
    }
    u32::try_from(requests / per_step * 10).ok()
}

/// The arrival stream generator for a scenario seed.
pub fn scenario_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw_arrivals(counts: &[u64], window: Micros, seed: u64) -> Result<Scenario> {
    let total: u64 = counts.iter().sum();
    if total > 0 && window == Micros::ZERO {
        return Err(Error::InvalidConfig("window must be positive"));
    }
    let mut rng = scenario_rng(seed);
    let mut arrivals = Vec::with_capacity(total as usize);
    for (function, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let gen_time = Micros(rng.random_range(0..window.0));
            arrivals.push(Arrival { gen_time, function });
        }
    }
    arrivals.sort();
    Ok(Scenario { arrivals, window, seed })
}

/// Equal number of calls per function, times i.i.d. uniform over `[0, window)`.
pub fn generate_uniform_scenario(
    catalog: &FunctionCatalog,
    cores: u32,
    intensity: u32,
    window: Micros,
    seed: u64,
) -> Result<Scenario> {
    let size = scenario_size(cores, intensity)?;
    let functions = catalog.len();
    if functions == 0 || size % functions as u64 != 0 {
        return Err(Error::UnevenScenario {
            requests: size,
            functions,
        });
    }
    let per_function = size / functions as u64;
    draw_arrivals(&alloc::vec![per_function; functions], window, seed)
}

/// Explicit per-function call counts, times uniform over the window.
/// Functions absent from `counts` get no calls.
pub fn generate_skewed_scenario<'a, I>(
    catalog: &FunctionCatalog,
    counts: I,
    window: Micros,
    seed: u64,
) -> Result<Scenario>
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let mut per_function = alloc::vec![0u64; catalog.len()];
    for (name, count) in counts {
        per_function[catalog.index_of(name)?] += count;
    }
    draw_arrivals(&per_function, window, seed)
}

/// How processing times are synthesized from a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Always the idle-node median.
    #[default]
    DeterministicMedian,
    /// Lognormal fitted to the median and 95th percentile, clamped to
    /// `[p05 / 2, 4 * p95]`.
    LogNormal,
}

/// Lognormal `(mu, sigma)` over microseconds matching the profile's median
/// and 95th percentile.
pub fn lognormal_params(profile: &FunctionProfile) -> (f64, f64) {
    let median = profile.median.0 as f64;
    let mu = libm::log(median);
    let sigma = libm::log(profile.p95.0 as f64 / median) / Z95;
    (mu, sigma)
}

pub fn sample_processing_time<R: Rng + ?Sized>(profile: &FunctionProfile, mode: SamplingMode, rng: &mut R) -> Micros {
    match mode {
        SamplingMode::DeterministicMedian => profile.median,
        SamplingMode::LogNormal => {
            let (mu, sigma) = lognormal_params(profile);
            let draw = LogNormal::new(mu, sigma)
                .expect("profile quantiles give a finite sigma")
                .sample(rng);
            let lo = profile.p05.0 as f64 / 2.0;
            let hi = 4.0 * profile.p95.0 as f64;
            Micros((libm::round(draw.clamp(lo, hi)) as u64).max(1))
        }
    }
}
