//! Response time, stretch and their order statistics.
//!
//! Percentiles use the nearest-rank rule: the `ceil(q * n)`-th smallest
//! sample.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::engine::CompletionRecord;
use crate::error::{Error, Result};
use crate::time::Micros;
use crate::workload::FunctionCatalog;

/// `R(i) = c(i) - r(i)`.
pub fn response_time(record: &CompletionRecord) -> Micros {
    record.completion - record.gen_time
}

/// Idle-system medians used as stretch denominators, by catalog index.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchConfig {
    idle_medians: Vec<Option<Micros>>,
    names: Vec<alloc::string::String>,
}

impl StretchConfig {
    pub fn from_catalog(catalog: &FunctionCatalog) -> Self {
        StretchConfig {
            idle_medians: catalog.profiles().iter().map(|p| Some(p.median)).collect(),
            names: catalog.profiles().iter().map(|p| p.name.clone()).collect(),
        }
    }

    /// Drop the baseline for one function (mostly for tests).
    pub fn without(mut self, function: usize) -> Self {
        if let Some(slot) = self.idle_medians.get_mut(function) {
            *slot = None;
        }
        self
    }

    pub fn idle_median(&self, function: usize) -> Result<Micros> {
        match self.idle_medians.get(function) {
            Some(Some(m)) if m.0 > 0 => Ok(*m),
            Some(_) => Err(Error::MissingBaseline(self.names[function].clone())),
            None => Err(Error::MissingBaseline(function.to_string())),
        }
    }
}

/// `S(i) = R(i) / idle_median(f(i))`; may be below 1.
pub fn stretch(record: &CompletionRecord, config: &StretchConfig) -> Result<f64> {
    let median = config.idle_median(record.function)?;
    Ok(response_time(record).0 as f64 / median.0 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentile of an ascending slice, `percent` in `1..=100`.
pub fn nearest_rank(sorted: &[f64], percent: u32) -> f64 {
    let n = sorted.len();
    let rank = (percent as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn summarize(values: &[f64]) -> Result<StatSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(StatSummary {
        count: sorted.len(),
        // clamp float drift so mean stays within [min, max]
        mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
        min: sorted[0],
        p50: nearest_rank(&sorted, 50),
        p75: nearest_rank(&sorted, 75),
        p95: nearest_rank(&sorted, 95),
        p99: nearest_rank(&sorted, 99),
        max: sorted[sorted.len() - 1],
    })
}

/// Box-plot statistics: quartiles, whiskers at the most extreme samples
/// within 1.5 IQR of the box, and the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPlot {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
}

pub fn box_plot(values: &[f64]) -> Result<BoxPlot> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = nearest_rank(&sorted, 25);
    let q3 = nearest_rank(&sorted, 75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    Ok(BoxPlot {
        q1,
        median: nearest_rank(&sorted, 50),
        q3,
        whisker_low: sorted.iter().copied().find(|&v| v >= lo).unwrap_or(q1),
        whisker_high: sorted.iter().rev().copied().find(|&v| v <= hi).unwrap_or(q3),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    })
}

/// Response times in milliseconds.
pub fn response_times_ms(records: &[CompletionRecord]) -> Vec<f64> {
    records.iter().map(|r| response_time(r).as_ms_f64()).collect()
}

pub fn stretches(records: &[CompletionRecord], config: &StretchConfig) -> Result<Vec<f64>> {
    records.iter().map(|r| stretch(r, config)).collect()
}

/// Stretch summary per function, keyed by catalog index.
pub fn per_function_summary(
    records: &[CompletionRecord],
    config: &StretchConfig,
) -> Result<BTreeMap<usize, StatSummary>> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(r.function).or_default().push(stretch(r, config)?);
    }
    groups
        .into_iter()
        .map(|(f, values)| Ok((f, summarize(&values)?)))
        .collect()
}

pub fn cold_start_total(records: &[CompletionRecord]) -> usize {
    records.iter().filter(|r| r.cold_start).count()
}

pub fn max_completion(records: &[CompletionRecord]) -> Option<Micros> {
    records.iter().map(|r| r.completion).max()
}

/// Everything reported for one record set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub response_ms: StatSummary,
    pub stretch: StatSummary,
    pub max_completion: Micros,
    pub cold_starts: usize,
}

pub fn run_summary(records: &[CompletionRecord], config: &StretchConfig) -> Result<RunSummary> {
    Ok(RunSummary {
        response_ms: summarize(&response_times_ms(records))?,
        stretch: summarize(&stretches(records, config)?)?,
        max_completion: max_completion(records).ok_or(Error::EmptyInput)?,
        cold_starts: cold_start_total(records),
    })
}
