//! Experiment configuration: a TOML file with `[experiment]`, `[node]`,
//! `[fairness]`, `[cluster]` and `[output]` sections. Every field has a
//! default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nodesched_core::estimator::WindowBasis;
use nodesched_core::node::{ColdStartModel, ExecutionMode, NodeConfig};
use nodesched_core::workload::{scenario_size, FunctionCatalog, SamplingMode};
use nodesched_core::{Balancer, Micros, Strategy};
use serde::Deserialize;

use crate::error::{Result, SimError};
use crate::formats::{read_catalog, DEFAULT_CATALOG_CSV};

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub node: NodeSection,
    pub fairness: FairnessSection,
    pub cluster: ClusterSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Catalog CSV; the bundled table when absent.
    pub catalog: Option<PathBuf>,
    /// Constant subtracted from every catalog quantile.
    pub kafka_overhead_ms: u64,
    pub cores: Vec<u32>,
    pub intensities: Vec<u32>,
    pub strategies: Vec<String>,
    pub repetitions: u32,
    pub window_s: u64,
    /// Repetition `r` uses `seed + r` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,
    /// Worker threads for independent runs; 0 picks the machine default.
    pub threads: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "matrix".into(),
            catalog: None,
            kafka_overhead_ms: 0,
            cores: vec![10],
            intensities: vec![30, 40, 60],
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            repetitions: 5,
            window_s: 60,
            seed: 1,
            seeds: None,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeSection {
    /// `auto`, `baseline-memory` or `proposed-cpu`. `auto` runs the
    /// baseline strategy in memory mode and every other one in CPU mode.
    pub mode: String,
    pub memory_pool_mb: u64,
    pub container_memory_mb: u64,
    pub cold_start_ms: u64,
    /// When set, cold starts are uniform over `[cold_start_ms, cold_start_max_ms]`.
    pub cold_start_max_ms: Option<u64>,
    /// `median` or `lognormal`.
    pub sampling: String,
    pub prewarm: u32,
    pub context_switch_overhead: f64,
    pub estimator_window_s: u64,
    /// `receipts` or `completions`.
    pub window_basis: String,
    pub warm_up: bool,
}

impl Default for NodeSection {
    fn default() -> Self {
        let d = NodeConfig::default();
        NodeSection {
            mode: "auto".into(),
            memory_pool_mb: d.memory_pool_mb,
            container_memory_mb: d.container_memory_mb,
            cold_start_ms: 500,
            cold_start_max_ms: None,
            sampling: "median".into(),
            prewarm: d.prewarm_count,
            context_switch_overhead: d.context_switch_overhead,
            estimator_window_s: 60,
            window_basis: "receipts".into(),
            warm_up: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessSection {
    pub cores: u32,
    pub intensity: u32,
    /// Function that receives only `long_calls` calls; the longest median
    /// in the catalog when absent.
    pub long_function: Option<String>,
    pub long_calls: u64,
    /// Explicit per-function counts; overrides the shape above.
    pub counts: Option<BTreeMap<String, u64>>,
    pub strategies: Vec<String>,
}

impl Default for FairnessSection {
    fn default() -> Self {
        FairnessSection {
            cores: 10,
            intensity: 90,
            long_function: None,
            long_calls: 10,
            counts: None,
            strategies: ["baseline", "fifo", "sept", "fc"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub nodes: Vec<usize>,
    pub cores: u32,
    pub requests: u64,
    pub strategies: Vec<String>,
    /// `round-robin` or `least-queued`.
    pub balancer: String,
    pub network_delay_ms: u64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            nodes: vec![1, 2, 3, 4],
            cores: 18,
            requests: 2376,
            strategies: vec!["baseline".into(), "fc".into()],
            balancer: "round-robin".into(),
            network_delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub emit_plotdata: bool,
    /// Write per-run node event logs.
    pub event_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("results"),
            emit_plotdata: false,
            event_log: false,
        }
    }
}

/// Command-line values that replace file values when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strategies: Vec<String>,
    pub cores: Vec<u32>,
    pub intensities: Vec<u32>,
    pub nodes: Vec<usize>,
    pub mode: Option<String>,
    pub reps: Option<u32>,
    pub threads: Option<usize>,
    pub emit_plotdata: bool,
}

fn parse_strategies(list: &[String], path: &str) -> Result<Vec<Strategy>> {
    if list.is_empty() {
        return Err(SimError::config(path, "at least one strategy is required"));
    }
    list.iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<Strategy>().map_err(|_| {
                SimError::config(
                    format!("{path}[{i}]"),
                    format!("unknown strategy `{s}` (expected one of baseline, fifo, sept, eect, rect, fc)"),
                )
            })
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<root>".into());
            SimError::config(path, message)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config { path: p, message } => SimError::config(format!("{}:{p}", path.display()), message),
            other => other,
        })?;
        // relative catalog paths are relative to the config file
        if let (Some(cat), Some(dir)) = (cfg.experiment.catalog.as_mut(), path.parent()) {
            if cat.is_relative() {
                *cat = dir.join(&*cat);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.experiment.seed = s;
            self.experiment.seeds = None;
        }
        if !o.strategies.is_empty() {
            self.experiment.strategies = o.strategies.clone();
            self.fairness.strategies = o.strategies.clone();
            self.cluster.strategies = o.strategies.clone();
        }
        if !o.cores.is_empty() {
            self.experiment.cores = o.cores.clone();
        }
        if !o.intensities.is_empty() {
            self.experiment.intensities = o.intensities.clone();
        }
        if !o.nodes.is_empty() {
            self.cluster.nodes = o.nodes.clone();
        }
        if let Some(m) = &o.mode {
            self.node.mode = m.clone();
        }
        if let Some(r) = o.reps {
            self.experiment.repetitions = r;
        }
        if let Some(t) = o.threads {
            self.experiment.threads = t;
        }
        if o.emit_plotdata {
            self.output.emit_plotdata = true;
        }
    }

    /// Check every field the runners rely on.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.repetitions == 0 {
            return Err(SimError::config("experiment.repetitions", "must be at least 1"));
        }
        if e.window_s == 0 {
            return Err(SimError::config("experiment.window_s", "must be positive"));
        }
        if let Some(seeds) = &e.seeds {
            if seeds.len() != e.repetitions as usize {
                return Err(SimError::config(
                    "experiment.seeds",
                    format!(
                        "expected {} seeds, one per repetition, got {}",
                        e.repetitions,
                        seeds.len()
                    ),
                ));
            }
        }
        if e.cores.is_empty() {
            return Err(SimError::config(
                "experiment.cores",
                "at least one core count is required",
            ));
        }
        for (i, &c) in e.cores.iter().enumerate() {
            if c == 0 {
                return Err(SimError::config(format!("experiment.cores[{i}]"), "must be at least 1"));
            }
        }
        if e.intensities.is_empty() {
            return Err(SimError::config(
                "experiment.intensities",
                "at least one intensity is required",
            ));
        }
        for (i, &v) in e.intensities.iter().enumerate() {
            scenario_size(1, v)
                .map_err(|err| SimError::config(format!("experiment.intensities[{i}]"), err.to_string()))?;
        }
        parse_strategies(&e.strategies, "experiment.strategies")?;
        parse_strategies(&self.fairness.strategies, "fairness.strategies")?;
        parse_strategies(&self.cluster.strategies, "cluster.strategies")?;
        self.mode()?;
        self.sampling()?;
        self.window_basis()?;
        self.balancer()?;
        if let Some(max) = self.node.cold_start_max_ms {
            if max < self.node.cold_start_ms {
                return Err(SimError::config(
                    "node.cold_start_max_ms",
                    "must not be below node.cold_start_ms",
                ));
            }
        }
        if self.node.estimator_window_s == 0 {
            return Err(SimError::config("node.estimator_window_s", "must be positive"));
        }
        let probe = self.node_config(1, Strategy::Fifo)?;
        probe
            .validate()
            .map_err(|err| SimError::config("node", err.to_string()))?;
        if self.cluster.nodes.contains(&0) || self.cluster.nodes.is_empty() {
            return Err(SimError::config("cluster.nodes", "node counts must be at least 1"));
        }
        if self.cluster.cores == 0 {
            return Err(SimError::config("cluster.cores", "must be at least 1"));
        }
        if self.fairness.cores == 0 {
            return Err(SimError::config("fairness.cores", "must be at least 1"));
        }
        scenario_size(self.fairness.cores, self.fairness.intensity)
            .map_err(|err| SimError::config("fairness.intensity", err.to_string()))?;
        self.catalog()?;
        Ok(())
    }

    pub fn catalog(&self) -> Result<FunctionCatalog> {
        let cat = match &self.experiment.catalog {
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
                read_catalog(f)?
            }
            None => read_catalog(DEFAULT_CATALOG_CSV.as_bytes())?,
        };
        Ok(match self.experiment.kafka_overhead_ms {
            0 => cat,
            ms => cat.with_overhead_removed(Micros::from_ms(ms)),
        })
    }

    pub fn window(&self) -> Micros {
        Micros::from_secs(self.experiment.window_s)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.experiment.seeds {
            Some(s) => s.clone(),
            None => (0..self.experiment.repetitions as u64)
                .map(|r| self.experiment.seed.wrapping_add(r))
                .collect(),
        }
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        parse_strategies(&self.experiment.strategies, "experiment.strategies")
    }

    pub fn fairness_strategies(&self) -> Result<Vec<Strategy>> {
        parse_strategies(&self.fairness.strategies, "fairness.strategies")
    }

    pub fn cluster_strategies(&self) -> Result<Vec<Strategy>> {
        parse_strategies(&self.cluster.strategies, "cluster.strategies")
    }

    fn mode(&self) -> Result<Option<ExecutionMode>> {
        match self.node.mode.as_str() {
            "auto" => Ok(None),
            "baseline-memory" => Ok(Some(ExecutionMode::BaselineMemory)),
            "proposed-cpu" => Ok(Some(ExecutionMode::ProposedCpu)),
            other => Err(SimError::config(
                "node.mode",
                format!("unknown mode `{other}` (expected auto, baseline-memory or proposed-cpu)"),
            )),
        }
    }

    fn sampling(&self) -> Result<SamplingMode> {
        match self.node.sampling.as_str() {
            "median" => Ok(SamplingMode::DeterministicMedian),
            "lognormal" => Ok(SamplingMode::LogNormal),
            other => Err(SimError::config(
                "node.sampling",
                format!("unknown sampling mode `{other}` (expected median or lognormal)"),
            )),
        }
    }

    fn window_basis(&self) -> Result<WindowBasis> {
        match self.node.window_basis.as_str() {
            "receipts" => Ok(WindowBasis::Receipts),
            "completions" => Ok(WindowBasis::Completions),
            other => Err(SimError::config(
                "node.window_basis",
                format!("unknown window basis `{other}` (expected receipts or completions)"),
            )),
        }
    }

    pub fn balancer(&self) -> Result<Balancer> {
        match self.cluster.balancer.as_str() {
            "round-robin" => Ok(Balancer::RoundRobin),
            "least-queued" => Ok(Balancer::LeastQueued),
            other => Err(SimError::config(
                "cluster.balancer",
                format!("unknown balancer `{other}` (expected round-robin or least-queued)"),
            )),
        }
    }

    /// Node parameters for one run.
    pub fn node_config(&self, cores: u32, strategy: Strategy) -> Result<NodeConfig> {
        let n = &self.node;
        let mode = self.mode()?.unwrap_or(match strategy {
            Strategy::Baseline => ExecutionMode::BaselineMemory,
            _ => ExecutionMode::ProposedCpu,
        });
        let cold_start = match n.cold_start_max_ms {
            Some(max) => ColdStartModel::Uniform {
                min: Micros::from_ms(n.cold_start_ms),
                max: Micros::from_ms(max),
            },
            None => ColdStartModel::Fixed(Micros::from_ms(n.cold_start_ms)),
        };
        Ok(NodeConfig {
            cores,
            memory_pool_mb: n.memory_pool_mb,
            container_memory_mb: n.container_memory_mb,
            cold_start,
            mode,
            strategy,
            prewarm_count: n.prewarm,
            sampling: self.sampling()?,
            context_switch_overhead: n.context_switch_overhead,
            window: Micros::from_secs(n.estimator_window_s),
            window_basis: self.window_basis()?,
            warm_up: n.warm_up,
        })
    }

    /// Per-function counts for the fairness scenario: the long function
    /// gets `long_calls`, the rest of `1.1 * cores * intensity` is split
    /// evenly over the other functions (earlier ones absorb any remainder).
    pub fn fairness_counts(&self, catalog: &FunctionCatalog) -> Result<Vec<(String, u64)>> {
        let f = &self.fairness;
        if let Some(counts) = &f.counts {
            for name in counts.keys() {
                catalog
                    .index_of(name)
                    .map_err(|e| SimError::config(format!("fairness.counts.{name}"), e.to_string()))?;
            }
            return Ok(catalog
                .profiles()
                .iter()
                .map(|p| (p.name.clone(), counts.get(&p.name).copied().unwrap_or(0)))
                .collect());
        }
        let total =
            scenario_size(f.cores, f.intensity).map_err(|e| SimError::config("fairness.intensity", e.to_string()))?;
        let long = match &f.long_function {
            Some(name) => catalog
                .index_of(name)
                .map_err(|e| SimError::config("fairness.long_function", e.to_string()))?,
            None => catalog
                .profiles()
                .iter()
                .enumerate()
                .max_by_key(|(i, p)| (p.median, std::cmp::Reverse(*i)))
                .map(|(i, _)| i)
                .ok_or_else(|| SimError::config("catalog", "empty catalog"))?,
        };
        if f.long_calls > total {
            return Err(SimError::config("fairness.long_calls", "exceeds the scenario size"));
        }
        let others = catalog.len() as u64 - 1;
        let rest = total - f.long_calls;
        let (share, mut extra) = rest.checked_div(others).map_or((0, 0), |s| (s, rest % others));
        Ok(catalog
            .profiles()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let n = if i == long {
                    f.long_calls
                } else {
                    let bump = u64::from(extra > 0);
                    extra -= bump;
                    share + bump
                };
                (p.name.clone(), n)
            })
            .collect())
    }
}
