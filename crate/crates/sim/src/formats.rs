//! CSV formats: the function catalog, scenarios, completion records, node
//! event logs, summaries and box-plot tables.

use std::io::{Read, Write};

use nodesched_core::engine::CompletionRecord;
use nodesched_core::metrics::{BoxPlot, StatSummary};
use nodesched_core::node::NodeLogEntry;
use nodesched_core::workload::{Arrival, FunctionCatalog, FunctionProfile, Scenario};
use nodesched_core::Micros;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// The built-in catalog file.
pub const DEFAULT_CATALOG_CSV: &str = include_str!("../data/sebs_catalog.csv");

#[derive(Debug, Serialize, Deserialize)]
struct CatalogRow {
    name: String,
    p05_ms: f64,
    median_ms: f64,
    p95_ms: f64,
}

fn ms_to_micros(ms: f64, field: &str, row: usize) -> Result<Micros> {
    if !(ms.is_finite() && ms > 0.0) {
        return Err(SimError::config(
            format!("catalog row {row}.{field}"),
            format!("expected a positive number of milliseconds, got {ms}"),
        ));
    }
    Ok(Micros((ms * 1_000.0).round() as u64))
}

/// Parse `name,p05_ms,median_ms,p95_ms`.
pub fn read_catalog<R: Read>(reader: R) -> Result<FunctionCatalog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut profiles = Vec::new();
    for (i, row) in rdr.deserialize::<CatalogRow>().enumerate() {
        let row = row?;
        let profile = FunctionProfile::new(
            row.name,
            ms_to_micros(row.p05_ms, "p05_ms", i + 1)?,
            ms_to_micros(row.median_ms, "median_ms", i + 1)?,
            ms_to_micros(row.p95_ms, "p95_ms", i + 1)?,
        )
        .map_err(|e| SimError::config(format!("catalog row {}", i + 1), e.to_string()))?;
        profiles.push(profile);
    }
    FunctionCatalog::new(profiles).map_err(|e| SimError::config("catalog", e.to_string()))
}

pub fn write_catalog<W: Write>(catalog: &FunctionCatalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in catalog.profiles() {
        w.serialize(CatalogRow {
            name: p.name.clone(),
            p05_ms: p.p05.as_ms_f64(),
            median_ms: p.median.as_ms_f64(),
            p95_ms: p.p95.as_ms_f64(),
        })?;
    }
    w.flush().map_err(|e| SimError::io("<catalog>", e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioRow {
    gen_time_us: u64,
    function: String,
}

/// `gen_time_us,function` with function names.
pub fn write_scenario<W: Write>(scenario: &Scenario, catalog: &FunctionCatalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for a in &scenario.arrivals {
        w.serialize(ScenarioRow {
            gen_time_us: a.gen_time.0,
            function: catalog.get(a.function)?.name.clone(),
        })?;
    }
    w.flush().map_err(|e| SimError::io("<scenario>", e))?;
    Ok(())
}

/// Read a scenario back for replay. Rows are re-sorted by time.
pub fn read_scenario<R: Read>(reader: R, catalog: &FunctionCatalog, window: Micros, seed: u64) -> Result<Scenario> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut arrivals = Vec::new();
    for row in rdr.deserialize::<ScenarioRow>() {
        let row = row?;
        arrivals.push(Arrival {
            gen_time: Micros(row.gen_time_us),
            function: catalog.index_of(&row.function)?,
        });
    }
    arrivals.sort();
    Ok(Scenario { arrivals, window, seed })
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct RecordRow {
    pub request_id: u64,
    pub function: String,
    pub r_us: u64,
    pub r_prime_us: u64,
    pub p_us: u64,
    pub c_us: u64,
    pub cold: u8,
    pub node: usize,
}

/// `request_id,function,r_us,r_prime_us,p_us,c_us,cold,node`.
pub fn write_records<W: Write>(records: &[CompletionRecord], catalog: &FunctionCatalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(RecordRow {
            request_id: r.request_id,
            function: catalog.get(r.function)?.name.clone(),
            r_us: r.gen_time.0,
            r_prime_us: r.receipt.0,
            p_us: r.processing.0,
            c_us: r.completion.0,
            cold: r.cold_start as u8,
            node: r.node,
        })?;
    }
    w.flush().map_err(|e| SimError::io("<records>", e))?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<RecordRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// `time_us,event,container,function,request_id`; absent fields are empty.
pub fn write_node_log<W: Write>(log: &[NodeLogEntry], catalog: &FunctionCatalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time_us", "event", "container", "function", "request_id"])?;
    for e in log {
        let function = match e.function {
            Some(f) => catalog.get(f)?.name.clone(),
            None => String::new(),
        };
        w.write_record([
            e.time.0.to_string(),
            e.event.name().to_string(),
            e.container.map(|c| c.to_string()).unwrap_or_default(),
            function,
            e.request_id.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| SimError::io("<log>", e))?;
    Ok(())
}

/// One line of a summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub strategy: String,
    pub cores: u32,
    pub intensity: u32,
    pub metric: String,
    pub stats: StatSummary,
    pub max_completion: Micros,
    pub cold_starts: usize,
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "config",
    "strategy",
    "cores",
    "intensity",
    "metric",
    "mean",
    "p50",
    "p75",
    "p95",
    "p99",
    "max_c",
    "cold_starts",
];

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Summary table. `max_c` is the latest completion in seconds.
pub fn write_summary<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.strategy.clone(),
            r.cores.to_string(),
            r.intensity.to_string(),
            r.metric.clone(),
            fmt6(r.stats.mean),
            fmt6(r.stats.p50),
            fmt6(r.stats.p75),
            fmt6(r.stats.p95),
            fmt6(r.stats.p99),
            fmt6(r.max_completion.0 as f64 / 1e6),
            r.cold_starts.to_string(),
        ])?;
    }
    w.flush().map_err(|e| SimError::io("<summary>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub config: String,
    pub strategy: String,
    pub cores: u32,
    pub intensity: u32,
    pub metric: String,
    pub plot: BoxPlot,
}

pub const PLOT_HEADER: [&str; 11] = [
    "config",
    "strategy",
    "cores",
    "intensity",
    "metric",
    "q1",
    "median",
    "q3",
    "whisker_low",
    "whisker_high",
    "mean",
];

pub fn write_plotdata<W: Write>(rows: &[PlotRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PLOT_HEADER)?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.strategy.clone(),
            r.cores.to_string(),
            r.intensity.to_string(),
            r.metric.clone(),
            fmt6(r.plot.q1),
            fmt6(r.plot.median),
            fmt6(r.plot.q3),
            fmt6(r.plot.whisker_low),
            fmt6(r.plot.whisker_high),
            fmt6(r.plot.mean),
        ])?;
    }
    w.flush().map_err(|e| SimError::io("<plotdata>", e))?;
    Ok(())
}
