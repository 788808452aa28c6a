//! Discrete-event kernel and cluster driver.
//!
//! Events are processed in `(time, class, seq)` order: at equal timestamps
//! cold-start and execution completions run before arrivals so freed slots
//! are visible to new calls, and within a class the global sequence number
//! assigned at scheduling time decides.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::error::{Error, Result};
use crate::node::{ContainerId, Node, NodeConfig, NodeLogEntry, Timer, TimerKind};
use crate::policy::Request;
use crate::time::Micros;
use crate::workload::{FunctionCatalog, Scenario};

/// Outcome of one call, as seen by the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompletionRecord {
    pub request_id: u64,
    pub function: usize,
    /// `r(i)`: generated by the client.
    pub gen_time: Micros,
    /// `r'(i)`: received by the node.
    pub receipt: Micros,
    /// `p(i)`: work the call needed.
    pub processing: Micros,
    /// `c(i)`: result available.
    pub completion: Micros,
    pub cold_start: bool,
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Balancer {
    /// Arrival `k` goes to node `k mod n`.
    #[default]
    RoundRobin,
    /// Node with the shortest queue; ties go to fewer outstanding calls,
    /// then the lower index.
    LeastQueued,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub nodes: Vec<NodeConfig>,
    pub balancer: Balancer,
    /// Client to node delay added to every arrival.
    pub network_delay: Micros,
}

impl ClusterConfig {
    pub fn single(node: NodeConfig) -> Self {
        Self::uniform(node, 1)
    }

    pub fn uniform(node: NodeConfig, count: usize) -> Self {
        ClusterConfig {
            nodes: alloc::vec![node; count],
            balancer: Balancer::RoundRobin,
            network_delay: Micros::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival {
        index: usize,
    },
    ColdStartDone {
        node: usize,
        container: ContainerId,
    },
    ExecutionDone {
        node: usize,
        container: ContainerId,
        epoch: u64,
    },
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::Arrival { .. } => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub time: Micros,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.class(), self.seq).cmp(&(other.time, other.kind.class(), other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Engine {
    nodes: Vec<Node>,
    scenario: Scenario,
    events: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    now: Micros,
    balancer: Balancer,
    next_node: usize,
    records: Vec<CompletionRecord>,
    processed: u64,
    budget: u64,
    timers: Vec<Timer>,
}

impl Engine {
    /// Build the nodes, warm them up and schedule every arrival.
    pub fn new(cluster: &ClusterConfig, catalog: &FunctionCatalog, scenario: &Scenario) -> Result<Self> {
        if cluster.nodes.is_empty() {
            return Err(Error::InvalidConfig("cluster needs at least one node"));
        }
        if let Some(a) = scenario.arrivals.iter().find(|a| a.function >= catalog.len()) {
            return Err(Error::UnknownFunctionIndex(a.function));
        }
        let mut nodes = Vec::with_capacity(cluster.nodes.len());
        for (id, cfg) in cluster.nodes.iter().enumerate() {
            let mut node = Node::new(id, cfg.clone(), catalog, scenario.seed)?;
            if cfg.warm_up {
                node.warm_up()?;
            } else {
                node.add_prewarm();
            }
            nodes.push(node);
        }
        let mut engine = Engine {
            nodes,
            scenario: scenario.clone(),
            events: BinaryHeap::new(),
            next_seq: 0,
            now: Micros::ZERO,
            balancer: cluster.balancer,
            next_node: 0,
            records: Vec::with_capacity(scenario.len()),
            processed: 0,
            budget: 10_000 + 200 * scenario.len() as u64,
            timers: Vec::new(),
        };
        for (index, a) in scenario.arrivals.iter().enumerate() {
            engine.schedule(a.gen_time + cluster.network_delay, EventKind::Arrival { index });
        }
        Ok(engine)
    }

    pub fn with_event_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn enable_logs(&mut self) {
        for n in &mut self.nodes {
            n.enable_log();
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    pub fn records(&self) -> &[CompletionRecord] {
        &self.records
    }

    fn schedule(&mut self, time: Micros, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.push(Reverse(SimEvent { time, seq, kind }));
    }

    fn flush_timers(&mut self, node: usize) {
        let timers = core::mem::take(&mut self.timers);
        for t in &timers {
            let kind = match t.kind {
                TimerKind::ColdStartDone(container) => EventKind::ColdStartDone { node, container },
                TimerKind::ExecutionDone { container, epoch } => EventKind::ExecutionDone { node, container, epoch },
            };
            self.schedule(t.at, kind);
        }
        self.timers = timers;
        self.timers.clear();
    }

    fn pick_node(&mut self) -> usize {
        match self.balancer {
            Balancer::RoundRobin => {
                let n = self.next_node;
                self.next_node = (self.next_node + 1) % self.nodes.len();
                n
            }
            Balancer::LeastQueued => self
                .nodes
                .iter()
                .enumerate()
                .min_by_key(|(i, n)| (n.queue().len(), n.outstanding(), *i))
                .map(|(i, _)| i)
                .expect("at least one node"),
        }
    }

    /// Process the next event. Returns `false` once the queue is drained.
    pub fn step(&mut self) -> Result<bool> {
        let Some(Reverse(event)) = self.events.pop() else {
            return Ok(false);
        };
        self.processed += 1;
        if self.processed > self.budget {
            return Err(Error::SimulationStuck(self.budget));
        }
        debug_assert!(event.time >= self.now);
        self.now = event.time;
        match event.kind {
            EventKind::Arrival { index } => {
                let a = self.scenario.arrivals[index];
                let request = Request {
                    id: index as u64,
                    function: a.function,
                    gen_time: a.gen_time,
                };
                let node = self.pick_node();
                self.nodes[node].submit(request, event.time, &mut self.timers)?;
                self.flush_timers(node);
            }
            EventKind::ColdStartDone { node, container } => {
                self.nodes[node].on_cold_start_done(container, event.time, &mut self.timers)?;
                self.flush_timers(node);
            }
            EventKind::ExecutionDone { node, container, epoch } => {
                if let Some(record) =
                    self.nodes[node].on_execution_complete(container, epoch, event.time, &mut self.timers)?
                {
                    self.records.push(record);
                }
                self.flush_timers(node);
            }
        }
        Ok(true)
    }

    /// Run to completion, calling `probe` after every processed event.
    pub fn run_with_probe<F: FnMut(&Engine)>(mut self, mut probe: F) -> Result<Vec<CompletionRecord>> {
        while self.step()? {
            probe(&self);
        }
        self.finish()
    }

    pub fn run(self) -> Result<Vec<CompletionRecord>> {
        self.run_with_probe(|_| {})
    }

    /// Per-node event logs (empty unless enabled).
    pub fn take_logs(&mut self) -> Vec<Vec<NodeLogEntry>> {
        self.nodes.iter_mut().map(Node::take_log).collect()
    }

    /// Drain remaining events and return the sorted records.
    pub fn run_to_end(&mut self) -> Result<Vec<CompletionRecord>> {
        while self.step()? {}
        self.check_done()?;
        let mut records = core::mem::take(&mut self.records);
        records.sort_by_key(|r| r.request_id);
        Ok(records)
    }

    fn check_done(&self) -> Result<()> {
        if self.records.len() != self.scenario.len() {
            return Err(Error::SimulationStuck(self.processed));
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<CompletionRecord>> {
        self.check_done()?;
        self.records.sort_by_key(|r| r.request_id);
        Ok(self.records)
    }
}

/// Simulate one node over a scenario.
pub fn run_single(
    config: &NodeConfig,
    catalog: &FunctionCatalog,
    scenario: &Scenario,
) -> Result<Vec<CompletionRecord>> {
    run_cluster(&ClusterConfig::single(config.clone()), catalog, scenario)
}

/// Simulate a cluster; each arrival is routed by the balancer when it
/// reaches the controller.
pub fn run_cluster(
    cluster: &ClusterConfig,
    catalog: &FunctionCatalog,
    scenario: &Scenario,
) -> Result<Vec<CompletionRecord>> {
    Engine::new(cluster, catalog, scenario)?.run()
}
