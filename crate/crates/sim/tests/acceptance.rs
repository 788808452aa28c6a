//! Acceptance criteria. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` fail in this model for reasons given in
//! the README; they are still run and reported. The process exits non-zero
//! if any other criterion fails, or if a known-unmet one starts passing so
//! the list gets revisited.

use std::collections::HashMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nodesched::config::ExperimentConfig;
use nodesched::core::metrics::{per_function_summary, run_summary, StretchConfig};
use nodesched::core::node::{ContainerState, NodeEventKind};
use nodesched::core::policy::Request;
use nodesched::core::workload::{generate_skewed_scenario, generate_uniform_scenario, Arrival};
use nodesched::core::{
    ClusterConfig, CompletionRecord, Engine, Estimator, FunctionCatalog, FunctionProfile, Micros, NodeConfig,
    PrioritizedRequest, PriorityQueue, Scenario, Strategy as Policy, WindowBasis,
};
use nodesched::run_matrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};

const KNOWN_UNMET: [u32; 2] = [8, 9];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const WINDOW: Micros = Micros(60_000_000);

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
}

fn run(cluster: &ClusterConfig, catalog: &FunctionCatalog, scenario: &Scenario) -> Vec<CompletionRecord> {
    Engine::new(cluster, catalog, scenario).unwrap().run().unwrap()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

// 1 -------------------------------------------------------------------------

const FUNCTIONS: usize = 3;
const EST_WINDOW_US: u64 = 5_000;

#[derive(Debug, Clone)]
enum Op {
    Receipt(usize, u64),
    Completion(usize, u64),
}

fn estimator_equivalence() -> Outcome {
    let op = prop_oneof![
        (0..FUNCTIONS, 0u64..3_000).prop_map(|(f, dt)| Op::Receipt(f, dt)),
        (0..FUNCTIONS, 1u64..100_000).prop_map(|(f, d)| Op::Completion(f, d)),
    ];
    let ops = proptest::collection::vec(op, 1..100);
    let result = runner(10_000).run(&ops, |ops| {
        let mut est = Estimator::new(FUNCTIONS, Micros(EST_WINDOW_US), WindowBasis::Receipts);
        let mut receipts = vec![Vec::<u64>::new(); FUNCTIONS];
        let mut durations = vec![Vec::<u64>::new(); FUNCTIONS];
        let mut now = 0;
        for op in ops {
            match op {
                Op::Receipt(f, dt) => {
                    now += dt;
                    est.record_receipt(f, Micros(now)).unwrap();
                    receipts[f].push(now);
                }
                Op::Completion(f, d) => {
                    est.record_completion(f, Micros(d), Micros(now)).unwrap();
                    durations[f].push(d);
                }
            }
            for f in 0..FUNCTIONS {
                let tail = &durations[f][durations[f].len().saturating_sub(10)..];
                let want = if tail.is_empty() {
                    0.0
                } else {
                    tail.iter().sum::<u64>() as f64 / tail.len() as f64
                };
                prop_assert_eq!(est.expected_processing_us(f).unwrap(), want);
                let count = receipts[f]
                    .iter()
                    .filter(|&&t| t <= now && now < t + EST_WINDOW_US)
                    .count();
                prop_assert_eq!(est.calls_in_window(f, Micros(now)).unwrap(), count);
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "10000 sequences match the unbounded log"),
        Err(e) => outcome(false, e.to_string()),
    }
}

// 2 -------------------------------------------------------------------------

fn queue_equivalence() -> Outcome {
    let ops = proptest::collection::vec(proptest::option::weighted(0.6, 0u32..30), 1..200);
    let result = runner(1_000).run(&ops, |ops| {
        let mut q = PriorityQueue::new();
        let mut model: Vec<(u32, u64)> = Vec::new();
        for (seq, op) in ops.into_iter().enumerate() {
            match op {
                Some(p) => {
                    q.push(PrioritizedRequest {
                        request: Request {
                            id: seq as u64,
                            function: 0,
                            gen_time: Micros::ZERO,
                        },
                        receipt: Micros::ZERO,
                        priority: p as f64,
                        sequence: seq as u64,
                    });
                    model.push((p, seq as u64));
                }
                None => {
                    model.sort_unstable();
                    let want = (!model.is_empty()).then(|| model.remove(0));
                    prop_assert_eq!(q.pop_min().map(|x| (x.priority as u32, x.sequence)), want);
                }
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "1000 push/pop sequences match the sorted model"),
        Err(e) => outcome(false, e.to_string()),
    }
}

// 3 -------------------------------------------------------------------------

fn non_preemption() -> Outcome {
    let cat = FunctionCatalog::sebs();
    let scenario = generate_uniform_scenario(&cat, 10, 40, WINDOW, SEEDS[0]).unwrap();
    let (mut events, mut violations) = (0u64, 0u64);
    for strategy in [Policy::Fifo, Policy::Sept, Policy::Eect, Policy::Rect, Policy::Fc] {
        let cluster = ClusterConfig::single(NodeConfig::proposed(10, strategy));
        let records = Engine::new(&cluster, &cat, &scenario)
            .unwrap()
            .run_with_probe(|e| {
                let n = &e.nodes()[0];
                events += 1;
                let busy = n.containers().filter(|c| c.state == ContainerState::Busy).count();
                let rates_ok = n.executions().count() == busy && n.progress_rate() == 1.0;
                if busy > 10 || n.occupied_slots() > 10 || !rates_ok {
                    violations += 1;
                }
            })
            .unwrap();
        if records.len() != scenario.len() {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {events} events, 5 strategies"),
    )
}

// 4 -------------------------------------------------------------------------

/// Completion times of jobs `(arrival, work)` sharing `cores` processors
/// equally, computed by stepping between arrivals and departures.
fn ps_oracle(jobs: &[(f64, f64)], cores: f64) -> Vec<f64> {
    let mut remaining: Vec<f64> = jobs.iter().map(|j| j.1).collect();
    let mut done = vec![f64::NAN; jobs.len()];
    let mut t = 0.0;
    loop {
        let active: Vec<usize> = (0..jobs.len())
            .filter(|&i| jobs[i].0 <= t && done[i].is_nan())
            .collect();
        let next_arrival = jobs
            .iter()
            .map(|j| j.0)
            .filter(|&a| a > t)
            .fold(f64::INFINITY, f64::min);
        if active.is_empty() {
            if next_arrival.is_infinite() {
                return done;
            }
            t = next_arrival;
            continue;
        }
        let rate = (cores / active.len() as f64).min(1.0);
        let first_finish = active
            .iter()
            .map(|&i| remaining[i] / rate)
            .fold(f64::INFINITY, f64::min);
        let dt = first_finish.min(next_arrival - t);
        for &i in &active {
            remaining[i] -= dt * rate;
            if remaining[i] <= 1e-9 {
                done[i] = t + dt;
            }
        }
        t += dt;
    }
}

fn processor_sharing() -> Outcome {
    // each job is its own function so warm-up leaves it a free container
    let instances: [(u32, &[(u64, u64)]); 5] = [
        (1, &[(0, 100), (50, 100)]),
        (1, &[(0, 300), (100, 200), (200, 100)]),
        (2, &[(0, 400), (0, 400), (100, 100)]),
        (1, &[(0, 1000), (0, 10), (5, 10)]),
        (2, &[(0, 700), (300, 250), (310, 90)]),
    ];
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (cores, jobs) in instances {
        let cat = FunctionCatalog::new(
            jobs.iter()
                .enumerate()
                .map(|(i, &(_, p))| {
                    let p = Micros::from_ms(p);
                    FunctionProfile::new(format!("f{i}"), p, p, p).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let scenario = Scenario {
            arrivals: jobs
                .iter()
                .enumerate()
                .map(|(i, &(a, _))| Arrival {
                    gen_time: Micros::from_ms(a),
                    function: i,
                })
                .collect(),
            window: WINDOW,
            seed: 0,
        };
        let got = run(&ClusterConfig::single(NodeConfig::baseline(cores)), &cat, &scenario);
        let want = ps_oracle(
            &jobs
                .iter()
                .map(|&(a, p)| (a as f64 * 1e3, p as f64 * 1e3))
                .collect::<Vec<_>>(),
            cores as f64,
        );
        for (r, w) in got.iter().zip(&want) {
            worst = worst.max((r.completion.0 as f64 - w).abs());
        }
        detail.push(format!(
            "{:?}",
            got.iter().map(|r| r.completion.as_ms_f64()).collect::<Vec<_>>()
        ));
    }
    // the first two are the textbook cases: 150/200 ms and 600/600/500 ms
    outcome(
        worst <= 1.0,
        format!("max deviation {worst} us; completions ms {}", detail.join(" ")),
    )
}

// 5 -------------------------------------------------------------------------

/// Queue-pop order and insertion priorities from one logged run.
fn starvation_check(strategy: Policy, seed: u64, cat: &FunctionCatalog) -> Result<(f64, u64), String> {
    let scenario = generate_uniform_scenario(cat, 10, 60, WINDOW, seed).unwrap();
    let mut engine = Engine::new(
        &ClusterConfig::single(NodeConfig::proposed(10, strategy)),
        cat,
        &scenario,
    )
    .unwrap();
    engine.enable_logs();
    let mut priority: HashMap<u64, f64> = HashMap::new();
    while engine.step().map_err(|e| e.to_string())? {
        for item in engine.nodes()[0].queue().iter() {
            priority.entry(item.request.id).or_insert(item.priority);
        }
    }
    let records = engine.run_to_end().map_err(|e| e.to_string())?;
    if records.len() != scenario.len() {
        return Err(format!("{} of {} completed", records.len(), scenario.len()));
    }
    let log = engine.take_logs().remove(0);
    let n = scenario.len();
    let mut receipt = vec![0u64; n];
    let mut r_bar = vec![0u64; n];
    let mut last_receipt: HashMap<usize, u64> = HashMap::new();
    // positions in the node log, so same-instant events keep their order
    let mut receive_index = vec![0usize; n];
    let mut pop_index = vec![usize::MAX; n];
    let mut pop_time = vec![0u64; n];
    for (pos, e) in log.iter().enumerate() {
        let (Some(id), Some(f)) = (e.request_id, e.function) else {
            continue;
        };
        let id = id as usize;
        match e.event {
            NodeEventKind::Receive => {
                receipt[id] = e.time.0;
                receive_index[id] = pos;
                let prev = last_receipt.insert(f, e.time.0).unwrap_or(e.time.0);
                // r-bar never moves backwards within a function
                if prev > e.time.0 {
                    return Err(format!("r-bar regressed for function {f}"));
                }
                r_bar[id] = prev;
            }
            NodeEventKind::WarmStart | NodeEventKind::ColdStart => {
                pop_index[id] = pos;
                pop_time[id] = e.time.0;
            }
            _ => {}
        }
    }
    let max_wait = (0..n).map(|i| pop_time[i] - receipt[i]).max().unwrap_or(0);
    if pop_index.contains(&usize::MAX) {
        return Err("a request was never dispatched".into());
    }
    // base(i) is r'(i) for EECT and r-bar(i) for RECT; priority = base + E
    let base = |i: usize| if strategy == Policy::Eect { receipt[i] } else { r_bar[i] } as f64;
    let mut constrained = 0u64;
    for i in 0..n {
        // a call that never sat in the queue left it in the step it arrived
        let bound = match priority.get(&(i as u64)) {
            Some(&p) => p * 1e3,
            None => receipt[i] as f64,
        };
        for j in 0..n {
            // only calls that shared the queue with i are constrained
            let shared = pop_index[j] > receive_index[i];
            if i != j && shared && base(j) > bound {
                constrained += 1;
                if pop_index[j] < pop_index[i] {
                    return Err(format!("seed {seed}: request {j} overtook {i}"));
                }
            }
        }
    }
    Ok((max_wait as f64 / 1e3, constrained))
}

fn starvation_freedom() -> Outcome {
    let cat = FunctionCatalog::sebs();
    let mut worst_wait = 0.0f64;
    let mut pairs = 0;
    for strategy in [Policy::Eect, Policy::Rect] {
        for seed in 1..=100 {
            match starvation_check(strategy, seed, &cat) {
                Ok((w, p)) => {
                    worst_wait = worst_wait.max(w);
                    pairs += p;
                }
                Err(e) => return outcome(false, format!("{strategy}: {e}")),
            }
        }
    }
    outcome(
        true,
        format!("EECT and RECT, 100 seeds each: {pairs} constrained pairs ordered, all complete, max queue wait {worst_wait:.1} ms"),
    )
}

// 6 -------------------------------------------------------------------------

fn cold_start_threshold() -> Outcome {
    let cat = FunctionCatalog::sebs();
    let cores = 10;
    let threshold = 11 * cores as u64 * NodeConfig::default().container_memory_mb;
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in SEEDS {
        let scenario = generate_uniform_scenario(&cat, cores, 60, WINDOW, seed).unwrap();
        let mut above = Vec::new();
        let mut all = Vec::new();
        for gb in [8u64, 16, 32, 64] {
            let mut cfg = NodeConfig::proposed(cores, Policy::Fc);
            cfg.memory_pool_mb = gb * 1024;
            let cold = run(&ClusterConfig::single(cfg), &cat, &scenario)
                .iter()
                .filter(|r| r.cold_start)
                .count();
            all.push(cold);
            if gb * 1024 >= threshold {
                above.push(cold);
            }
        }
        pass &= above.windows(2).all(|w| w[0] == w[1]);
        let base = |intensity| {
            let s = generate_uniform_scenario(&cat, cores, intensity, WINDOW, seed).unwrap();
            run(&ClusterConfig::single(NodeConfig::baseline(cores)), &cat, &s)
                .iter()
                .filter(|r| r.cold_start)
                .count()
        };
        let (low, high) = (base(30), base(120));
        pass &= high >= 5 * low && high > low;
        lines.push(format!(
            "seed {seed}: cpu 8/16/32/64GB {all:?}, baseline i30 {low} i120 {high}"
        ));
    }
    outcome(pass, lines.join("; "))
}

// 7 -------------------------------------------------------------------------

fn qualitative_ordering() -> Outcome {
    let cat = FunctionCatalog::sebs();
    let stretch_cfg = StretchConfig::from_catalog(&cat);
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let scenario = generate_uniform_scenario(&cat, 10, 60, WINDOW, seed).unwrap();
        let s = |st| {
            let r = run(&ClusterConfig::single(NodeConfig::proposed(10, st)), &cat, &scenario);
            run_summary(&r, &stretch_cfg).unwrap()
        };
        let (fifo, sept, fc) = (s(Policy::Fifo), s(Policy::Sept), s(Policy::Fc));
        pass &= sept.response_ms.mean < fifo.response_ms.mean;
        pass &= fc.response_ms.mean < fifo.response_ms.mean;
        pass &= fc.stretch.mean * 2.0 <= fifo.stretch.mean;
        lines.push(format!(
            "seed {seed}: resp ms FIFO {:.0} SEPT {:.0} FC {:.0}, stretch FIFO {:.1} FC {:.1}",
            fifo.response_ms.mean, sept.response_ms.mean, fc.response_ms.mean, fifo.stretch.mean, fc.stretch.mean
        ));
    }
    outcome(pass, lines.join("; "))
}

// 8 -------------------------------------------------------------------------

fn fairness_direction() -> Outcome {
    let cfg = ExperimentConfig::default();
    let cat = cfg.catalog().unwrap();
    let counts = cfg.fairness_counts(&cat).unwrap();
    let stretch_cfg = StretchConfig::from_catalog(&cat);
    let dna = cat.index_of("dna-visualisation").unwrap();
    let bfs = cat.index_of("graph-bfs").unwrap();
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let scenario =
            generate_skewed_scenario(&cat, counts.iter().map(|(n, c)| (n.as_str(), *c)), WINDOW, seed).unwrap();
        let per_fn = |st| {
            let node = cfg.node_config(cfg.fairness.cores, st).unwrap();
            per_function_summary(&run(&ClusterConfig::single(node), &cat, &scenario), &stretch_cfg).unwrap()
        };
        let (sept, fc) = (per_fn(Policy::Sept), per_fn(Policy::Fc));
        let ok = fc[&dna].mean < sept[&dna].mean && sept[&bfs].mean <= fc[&bfs].mean;
        good += ok as u32;
        lines.push(format!(
            "seed {seed}: dna SEPT {:.3} FC {:.3}, bfs SEPT {:.3} FC {:.3}",
            sept[&dna].mean, fc[&dna].mean, sept[&bfs].mean, fc[&bfs].mean
        ));
    }
    outcome(good >= 4, format!("{good}/5 seeds; {}", lines.join("; ")))
}

// 9 -------------------------------------------------------------------------

fn cluster_direction() -> Outcome {
    let cat = FunctionCatalog::sebs();
    let per_function = 2376 / cat.len() as u64;
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let counts = cat.profiles().iter().map(|p| (p.name.as_str(), per_function));
        let scenario = generate_skewed_scenario(&cat, counts, WINDOW, seed).unwrap();
        let mean_ms = |node: NodeConfig, n| {
            let records = run(&ClusterConfig::uniform(node, n), &cat, &scenario);
            mean(records.iter().map(|r| (r.completion - r.gen_time).as_ms_f64()))
        };
        let fc3 = mean_ms(NodeConfig::proposed(18, Policy::Fc), 3);
        let base4 = mean_ms(NodeConfig::baseline(18), 4);
        good += (fc3 < base4) as u32;
        lines.push(format!("seed {seed}: FC x3 {fc3:.1} ms, baseline x4 {base4:.1} ms"));
    }
    outcome(good >= 4, format!("{good}/5 seeds; {}", lines.join("; ")))
}

// 10 ------------------------------------------------------------------------

const TINY: &str = r#"
[experiment]
name = "tiny"
cores = [2]
intensities = [30, 60]
strategies = ["baseline", "fifo", "sept", "eect", "rect", "fc"]
repetitions = 2
window_s = 10

[node]
sampling = "lognormal"

[output]
emit_plotdata = true
event_log = true
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a", 1), ("b", 1), ("c", 4)] {
        let mut cfg = ExperimentConfig::from_toml_str(TINY).unwrap();
        cfg.output.dir = tmp.path().join(name);
        cfg.experiment.threads = threads;
        if let Err(e) = run_matrix(&cfg).and_then(|r| r.into_result()) {
            return outcome(false, e.to_string());
        }
        outputs.push(snapshot(&cfg.output.dir));
    }
    let files = outputs[0].len();
    let same = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    outcome(
        same && files > 0,
        format!("{files} files identical across two runs and 1 vs 4 threads: {same}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "estimator matches unbounded-log oracle", estimator_equivalence),
        (2, "priority queue matches sort oracle", queue_equivalence),
        (3, "CPU mode never exceeds cores, rate 1", non_preemption),
        (4, "processor sharing matches analytic times", processor_sharing),
        (5, "EECT/RECT starvation freedom", starvation_freedom),
        (6, "cold-start memory threshold", cold_start_threshold),
        (7, "SEPT and FC beat FIFO", qualitative_ordering),
        (8, "FC fairness for the rare long function", fairness_direction),
        (9, "FC on 3 nodes beats baseline on 4", cluster_direction),
        (10, "deterministic, thread-independent outputs", determinism),
    ];
    let start = Instant::now();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, title, check) in criteria {
        let t = Instant::now();
        let o = check();
        let known = KNOWN_UNMET.contains(&id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "[{tag}] criterion {id}: {title} ({:.1}s) -- {}",
            t.elapsed().as_secs_f64(),
            o.detail
        );
        passed += o.pass as u32;
        if o.pass == known {
            unexpected.push(id);
        }
    }
    println!(
        "acceptance: {passed}/10 passed in {:.1}s; known unmet: {KNOWN_UNMET:?}",
        start.elapsed().as_secs_f64()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
