//! Experiment drivers. Each expands its grid into independent runs,
//! executes them on a bounded worker pool and writes one records CSV per
//! run plus pooled summary tables.
//!
//! A run that fails is reported in [`Report::failures`]; the other runs and
//! every summary group that does not depend on it are still written.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nodesched_core::engine::{ClusterConfig, CompletionRecord, Engine};
use nodesched_core::metrics::{
    box_plot, cold_start_total, max_completion, response_times_ms, stretches, summarize, StretchConfig,
};
use nodesched_core::workload::{
    generate_skewed_scenario, generate_uniform_scenario, intensity_for, FunctionCatalog, Scenario,
};
use nodesched_core::{Micros, Strategy};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::formats::{
    write_node_log, write_plotdata, write_records, write_scenario, write_summary, PlotRow, SummaryRow,
};

/// What a driver produced.
#[derive(Debug, Default)]
pub struct Report {
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
    /// `(run label, error)` for every run that did not complete.
    pub failures: Vec<(String, String)>,
}

impl Report {
    /// Turn recorded failures into an error.
    pub fn into_result(self) -> Result<Report> {
        if self.failures.is_empty() {
            Ok(self)
        } else {
            Err(SimError::Cells(self.failures))
        }
    }
}

struct Job {
    label: String,
    group: usize,
    cluster: ClusterConfig,
    scenario: Arc<Scenario>,
}

/// Identifies a pooled summary group.
struct Group {
    config: String,
    strategy: Strategy,
    cores: u32,
    intensity: u32,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| SimError::io(path, e))?))
}

fn pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.threads)
        .build()
        .map_err(|e| SimError::config("experiment.threads", e.to_string()))
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    catalog: &'a FunctionCatalog,
    out: PathBuf,
    report: Report,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig, catalog: &'a FunctionCatalog) -> Result<Self> {
        let out = cfg.output.dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| SimError::io(&out, e))?;
        Ok(Runner {
            cfg,
            catalog,
            out,
            report: Report::default(),
        })
    }

    fn save_scenario(&mut self, name: &str, scenario: &Scenario) -> Result<()> {
        let path = self.out.join("scenarios").join(format!("{name}.csv"));
        write_scenario(scenario, self.catalog, create(&path)?)?;
        self.report.files.push(path);
        Ok(())
    }

    fn run_one(&self, job: &Job) -> Result<(Vec<CompletionRecord>, Vec<PathBuf>)> {
        let mut engine = Engine::new(&job.cluster, self.catalog, &job.scenario)?;
        if self.cfg.output.event_log {
            engine.enable_logs();
        }
        let records = engine.run_to_end()?;
        let mut files = Vec::new();
        let path = self.out.join("records").join(format!("{}.csv", job.label));
        write_records(&records, self.catalog, create(&path)?)?;
        files.push(path);
        if self.cfg.output.event_log {
            for (k, log) in engine.take_logs().iter().enumerate() {
                let path = self.out.join("logs").join(format!("{}_node{k}.csv", job.label));
                write_node_log(log, self.catalog, create(&path)?)?;
                files.push(path);
            }
        }
        Ok((records, files))
    }

    /// Execute all jobs in order-preserving parallel fashion and pool the
    /// records of each group. A group with any failed run is `None`.
    fn execute(&mut self, jobs: Vec<Job>, groups: usize) -> Result<Vec<Option<Vec<CompletionRecord>>>> {
        let results: Vec<_> = pool(self.cfg)?.install(|| jobs.par_iter().map(|j| self.run_one(j)).collect());
        let mut pooled: Vec<Option<Vec<CompletionRecord>>> = vec![Some(Vec::new()); groups];
        for (job, result) in jobs.iter().zip(results) {
            match result {
                Ok((records, files)) => {
                    self.report.files.extend(files);
                    if let Some(acc) = &mut pooled[job.group] {
                        acc.extend(records);
                    }
                }
                Err(e) => {
                    self.report.failures.push((job.label.clone(), e.to_string()));
                    pooled[job.group] = None;
                }
            }
        }
        Ok(pooled)
    }

    fn seeds_and_window(&self) -> (Vec<u64>, Micros) {
        (self.cfg.seeds(), self.cfg.window())
    }

    fn finish(mut self, tables: Vec<(&str, Vec<SummaryRow>)>, plots: Option<(&str, Vec<PlotRow>)>) -> Result<Report> {
        for (name, rows) in tables {
            let path = self.out.join(name);
            write_summary(&rows, create(&path)?)?;
            self.report.files.push(path);
            self.report.rows.extend(rows);
        }
        if let Some((name, rows)) = plots {
            let path = self.out.join(name);
            write_plotdata(&rows, create(&path)?)?;
            self.report.files.push(path);
        }
        Ok(self.report)
    }
}

fn row(group: &Group, metric: String, values: &[f64], records: &[CompletionRecord]) -> Result<SummaryRow> {
    Ok(SummaryRow {
        config: group.config.clone(),
        strategy: group.strategy.name().to_string(),
        cores: group.cores,
        intensity: group.intensity,
        metric,
        stats: summarize(values)?,
        max_completion: max_completion(records).unwrap_or(Micros::ZERO),
        cold_starts: cold_start_total(records),
    })
}

fn plot(group: &Group, metric: String, values: &[f64]) -> Result<PlotRow> {
    Ok(PlotRow {
        config: group.config.clone(),
        strategy: group.strategy.name().to_string(),
        cores: group.cores,
        intensity: group.intensity,
        metric,
        plot: box_plot(values)?,
    })
}

/// Summaries of pooled groups: `(response rows, stretch rows, plot rows)`.
fn pooled_tables(
    groups: &[Group],
    pooled: &[Option<Vec<CompletionRecord>>],
    stretch_cfg: &StretchConfig,
) -> Result<(Vec<SummaryRow>, Vec<SummaryRow>, Vec<PlotRow>)> {
    let (mut response, mut stretch, mut plots) = (Vec::new(), Vec::new(), Vec::new());
    for (group, records) in groups.iter().zip(pooled) {
        let Some(records) = records else { continue };
        let r = response_times_ms(records);
        let s = stretches(records, stretch_cfg)?;
        response.push(row(group, "response_ms".into(), &r, records)?);
        stretch.push(row(group, "stretch".into(), &s, records)?);
        plots.push(plot(group, "response_ms".into(), &r)?);
        plots.push(plot(group, "stretch".into(), &s)?);
    }
    Ok((response, stretch, plots))
}

/// Cores x intensity x strategy x repetition. Every strategy of a
/// `(cores, intensity, repetition)` cell replays the same scenario.
///
/// Writes `summary.csv` (response time, one row per cores, intensity and
/// strategy, pooling all repetitions), `stretch.csv` with the same layout,
/// and optionally `plotdata.csv`.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let strategies = cfg.strategies()?;
    let mut runner = Runner::new(cfg, &catalog)?;
    let (seeds, window) = runner.seeds_and_window();
    let mut groups = Vec::new();
    let mut jobs = Vec::new();
    for &cores in &cfg.experiment.cores {
        for &intensity in &cfg.experiment.intensities {
            let base = groups.len();
            for &strategy in &strategies {
                groups.push(Group {
                    config: cfg.experiment.name.clone(),
                    strategy,
                    cores,
                    intensity,
                });
            }
            for (rep, &seed) in seeds.iter().enumerate() {
                let cell = format!("c{cores}_i{intensity}_r{rep}");
                let scenario = match generate_uniform_scenario(&catalog, cores, intensity, window, seed) {
                    Ok(s) => Arc::new(s),
                    Err(e) => {
                        runner.report.failures.push((cell, e.to_string()));
                        continue;
                    }
                };
                runner.save_scenario(&cell, &scenario)?;
                for (k, &strategy) in strategies.iter().enumerate() {
                    jobs.push(Job {
                        label: format!("{cell}_{}", strategy.name()),
                        group: base + k,
                        cluster: ClusterConfig::single(cfg.node_config(cores, strategy)?),
                        scenario: Arc::clone(&scenario),
                    });
                }
            }
        }
    }
    let pooled = runner.execute(jobs, groups.len())?;
    let (response, stretch, plots) = pooled_tables(&groups, &pooled, &StretchConfig::from_catalog(&catalog))?;
    let plots = cfg.output.emit_plotdata.then_some(("plotdata.csv", plots));
    runner.finish(vec![("summary.csv", response), ("stretch.csv", stretch)], plots)
}

/// Skewed scenario: one function gets few calls, the others share the
/// rest. Writes per-function rows (`stretch:<fn>` and `response_ms:<fn>`)
/// for each strategy to `fairness.csv`.
pub fn fairness_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let strategies = cfg.fairness_strategies()?;
    let counts = cfg.fairness_counts(&catalog)?;
    let f = &cfg.fairness;
    let mut runner = Runner::new(cfg, &catalog)?;
    let (seeds, window) = runner.seeds_and_window();
    let groups: Vec<Group> = strategies
        .iter()
        .map(|&strategy| Group {
            config: "fairness".into(),
            strategy,
            cores: f.cores,
            intensity: f.intensity,
        })
        .collect();
    let mut jobs = Vec::new();
    for (rep, &seed) in seeds.iter().enumerate() {
        let cell = format!("fairness_r{rep}");
        let scenario = generate_skewed_scenario(&catalog, counts.iter().map(|(n, c)| (n.as_str(), *c)), window, seed)?;
        let scenario = Arc::new(scenario);
        runner.save_scenario(&cell, &scenario)?;
        for (k, &strategy) in strategies.iter().enumerate() {
            jobs.push(Job {
                label: format!("{cell}_{}", strategy.name()),
                group: k,
                cluster: ClusterConfig::single(cfg.node_config(f.cores, strategy)?),
                scenario: Arc::clone(&scenario),
            });
        }
    }
    let pooled = runner.execute(jobs, groups.len())?;
    let stretch_cfg = StretchConfig::from_catalog(&catalog);
    let (mut rows, mut plots) = (Vec::new(), Vec::new());
    for (group, records) in groups.iter().zip(&pooled) {
        let Some(records) = records else { continue };
        for (index, profile) in catalog.profiles().iter().enumerate() {
            let subset: Vec<CompletionRecord> = records.iter().filter(|r| r.function == index).copied().collect();
            if subset.is_empty() {
                continue;
            }
            let s = stretches(&subset, &stretch_cfg)?;
            let r = response_times_ms(&subset);
            rows.push(row(group, format!("stretch:{}", profile.name), &s, &subset)?);
            rows.push(row(group, format!("response_ms:{}", profile.name), &r, &subset)?);
            plots.push(plot(group, format!("stretch:{}", profile.name), &s)?);
        }
    }
    let plots = cfg.output.emit_plotdata.then_some(("fairness_plotdata.csv", plots));
    runner.finish(vec![("fairness.csv", rows)], plots)
}

/// Fixed total load spread over a varying number of identical nodes. All
/// node counts and strategies of one repetition replay the same scenario.
/// Writes `cluster.csv` with `config = nodes=<n>` and `cores` the total
/// core count.
pub fn cluster_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let strategies = cfg.cluster_strategies()?;
    let c = &cfg.cluster;
    let functions = catalog.len() as u64;
    if c.requests == 0 || !c.requests.is_multiple_of(functions) {
        return Err(SimError::config(
            "cluster.requests",
            format!("must be a positive multiple of the {functions} catalog functions"),
        ));
    }
    let per_function = c.requests / functions;
    let mut runner = Runner::new(cfg, &catalog)?;
    let (seeds, window) = runner.seeds_and_window();
    let mut groups = Vec::new();
    for &nodes in &c.nodes {
        let total = c.cores * nodes as u32;
        for &strategy in &strategies {
            groups.push(Group {
                config: format!("nodes={nodes}"),
                strategy,
                cores: total,
                intensity: intensity_for(c.requests, total).unwrap_or(0),
            });
        }
    }
    let balancer = cfg.balancer()?;
    let mut jobs = Vec::new();
    for (rep, &seed) in seeds.iter().enumerate() {
        let cell = format!("cluster_r{rep}");
        let counts = catalog.profiles().iter().map(|p| (p.name.as_str(), per_function));
        let scenario = Arc::new(generate_skewed_scenario(&catalog, counts, window, seed)?);
        runner.save_scenario(&cell, &scenario)?;
        for (n, &nodes) in c.nodes.iter().enumerate() {
            for (k, &strategy) in strategies.iter().enumerate() {
                let node = cfg.node_config(c.cores, strategy)?;
                jobs.push(Job {
                    label: format!("{cell}_n{nodes}_{}", strategy.name()),
                    group: n * strategies.len() + k,
                    cluster: ClusterConfig {
                        nodes: vec![node; nodes],
                        balancer,
                        network_delay: Micros::from_ms(c.network_delay_ms),
                    },
                    scenario: Arc::clone(&scenario),
                });
            }
        }
    }
    let pooled = runner.execute(jobs, groups.len())?;
    let (mut response, stretch, plots) = pooled_tables(&groups, &pooled, &StretchConfig::from_catalog(&catalog))?;
    response.extend(stretch);
    let plots = cfg.output.emit_plotdata.then_some(("cluster_plotdata.csv", plots));
    runner.finish(vec![("cluster.csv", response)], plots)
}
