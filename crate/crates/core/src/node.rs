//! A single worker node: container pools, dispatch and execution.
//!
//! Containers are either prewarmed (runtime only), free (bound to a function
//! and idle), cold-starting, or busy (running exactly one call). A call is
//! placed by the usual invoker cascade: a free container of the same
//! function, then a prewarmed one, then a brand new container if memory
//! allows, then a new container after evicting idle ones, and otherwise it
//! waits in the queue.
//!
//! In [`ExecutionMode::ProposedCpu`] the node never runs more than `cores`
//! containers at once and every running call gets a full core. In
//! [`ExecutionMode::BaselineMemory`] only memory bounds concurrency and the
//! running calls share the cores equally (processor sharing).
//!
//! Processor sharing is tracked with a single virtual work clock per node:
//! all running calls progress at the same rate, so a call started at virtual
//! time `v` with work `p` finishes when the clock reaches `v + p`. Only the
//! earliest finisher has a pending timer; any change to the running set
//! bumps the node epoch, which invalidates the old timer.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::CompletionRecord;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, WindowBasis};
use crate::policy::{compute_priority, PrioritizedRequest, PriorityQueue, Request, Strategy};
use crate::time::Micros;
use crate::workload::{sample_processing_time, FunctionCatalog, FunctionProfile, SamplingMode};

pub type ContainerId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerState {
    Prewarm,
    Free,
    ColdStarting,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: ContainerId,
    /// `None` for prewarmed containers.
    pub function: Option<usize>,
    pub state: ContainerState,
    pub memory_mb: u64,
    pub last_used: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// Memory-bound pools; running calls share the cores.
    BaselineMemory,
    /// At most `cores` running calls, one core each.
    #[default]
    ProposedCpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColdStartModel {
    Fixed(Micros),
    /// Uniform over `[min, max]`.
    Uniform {
        min: Micros,
        max: Micros,
    },
}

impl Default for ColdStartModel {
    fn default() -> Self {
        ColdStartModel::Fixed(Micros::from_ms(500))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub cores: u32,
    pub memory_pool_mb: u64,
    pub container_memory_mb: u64,
    pub cold_start: ColdStartModel,
    pub mode: ExecutionMode,
    pub strategy: Strategy,
    pub prewarm_count: u32,
    pub sampling: SamplingMode,
    /// Extra slowdown applied while the baseline node is oversubscribed:
    /// each call progresses at `min(1, c/k) / (1 + overhead)`.
    pub context_switch_overhead: f64,
    pub window: Micros,
    pub window_basis: WindowBasis,
    pub warm_up: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            cores: 10,
            memory_pool_mb: 32 * 1024,
            container_memory_mb: 256,
            cold_start: ColdStartModel::default(),
            mode: ExecutionMode::ProposedCpu,
            strategy: Strategy::Fifo,
            prewarm_count: 0,
            sampling: SamplingMode::DeterministicMedian,
            context_switch_overhead: 0.0,
            window: Micros::from_secs(60),
            window_basis: WindowBasis::Receipts,
            warm_up: true,
        }
    }
}

impl NodeConfig {
    /// Stock invoker behavior.
    pub fn baseline(cores: u32) -> Self {
        NodeConfig {
            cores,
            mode: ExecutionMode::BaselineMemory,
            strategy: Strategy::Baseline,
            ..Default::default()
        }
    }

    /// CPU-limited node with the given queueing strategy.
    pub fn proposed(cores: u32, strategy: Strategy) -> Self {
        NodeConfig {
            cores,
            mode: ExecutionMode::ProposedCpu,
            strategy,
            ..Default::default()
        }
    }

    /// Baseline strategy always runs in memory mode; everything else in CPU mode.
    pub fn for_strategy(cores: u32, strategy: Strategy) -> Self {
        match strategy {
            Strategy::Baseline => Self::baseline(cores),
            other => Self::proposed(cores, other),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 {
            return Err(Error::InvalidCores);
        }
        if self.container_memory_mb == 0 {
            return Err(Error::InvalidConfig("container memory must be positive"));
        }
        if self.memory_pool_mb < self.container_memory_mb {
            return Err(Error::InvalidConfig("memory pool smaller than one container"));
        }
        if !(self.context_switch_overhead.is_finite() && self.context_switch_overhead >= 0.0) {
            return Err(Error::InvalidConfig("context switch overhead must be >= 0"));
        }
        if self.window == Micros::ZERO {
            return Err(Error::InvalidConfig("estimator window must be positive"));
        }
        if let ColdStartModel::Uniform { min, max } = self.cold_start {
            if min > max {
                return Err(Error::InvalidConfig("cold start min exceeds max"));
            }
        }
        Ok(())
    }

    /// Containers that fit in the pool.
    pub fn container_capacity(&self) -> u64 {
        self.memory_pool_mb / self.container_memory_mb
    }
}

/// Where a call was placed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DispatchOutcome {
    WarmStart(ContainerId),
    ColdStartFromPrewarm(ContainerId),
    ColdStartNew(ContainerId),
    ColdStartAfterEviction {
        container: ContainerId,
        evicted: Vec<ContainerId>,
    },
    Queued,
}

impl DispatchOutcome {
    pub fn container(&self) -> Option<ContainerId> {
        match *self {
            DispatchOutcome::WarmStart(c)
            | DispatchOutcome::ColdStartFromPrewarm(c)
            | DispatchOutcome::ColdStartNew(c)
            | DispatchOutcome::ColdStartAfterEviction { container: c, .. } => Some(c),
            DispatchOutcome::Queued => None,
        }
    }

    pub fn is_cold(&self) -> bool {
        !matches!(self, DispatchOutcome::WarmStart(_) | DispatchOutcome::Queued)
    }
}

/// A wake-up the node asks its driver for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timer {
    pub at: Micros,
    pub kind: TimerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    ColdStartDone(ContainerId),
    /// Stale unless `epoch` still matches the node's epoch.
    ExecutionDone {
        container: ContainerId,
        epoch: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Execution {
    pub request: PrioritizedRequest,
    pub work: Micros,
    pub started: Micros,
    pub cold: bool,
    finish_virtual: f64,
    order: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeEventKind {
    Receive,
    WarmStart,
    ColdStart,
    Evict,
    ExecStart,
    ExecDone,
}

impl NodeEventKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeEventKind::Receive => "receive",
            NodeEventKind::WarmStart => "warm_start",
            NodeEventKind::ColdStart => "cold_start",
            NodeEventKind::Evict => "evict",
            NodeEventKind::ExecStart => "exec_start",
            NodeEventKind::ExecDone => "exec_done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLogEntry {
    pub time: Micros,
    pub event: NodeEventKind,
    pub container: Option<ContainerId>,
    pub function: Option<usize>,
    pub request_id: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Node {
    id: usize,
    config: NodeConfig,
    profiles: Vec<FunctionProfile>,
    containers: BTreeMap<ContainerId, Container>,
    next_container: ContainerId,
    queue: PriorityQueue,
    estimator: Estimator,
    starting: BTreeMap<ContainerId, PrioritizedRequest>,
    executions: BTreeMap<ContainerId, Execution>,
    rng: ChaCha8Rng,
    clock: Micros,
    next_sequence: u64,
    next_order: u64,
    virtual_work: f64,
    epoch: u64,
    service_delivered: f64,
    cold_starts: u64,
    evictions: u64,
    containers_created: u64,
    outstanding: usize,
    log: Option<Vec<NodeLogEntry>>,
}

impl Node {
    /// The node's sampling stream is `seed` on stream `id + 1`; stream 0
    /// belongs to the arrival generator.
    pub fn new(id: usize, config: NodeConfig, catalog: &FunctionCatalog, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let estimator = Estimator::new(catalog.len(), config.window, config.window_basis);
        Ok(Node {
            id,
            config,
            profiles: catalog.profiles().to_vec(),
            containers: BTreeMap::new(),
            next_container: 0,
            queue: PriorityQueue::new(),
            estimator,
            starting: BTreeMap::new(),
            executions: BTreeMap::new(),
            rng,
            clock: Micros::ZERO,
            next_sequence: 0,
            next_order: 0,
            virtual_work: 0.0,
            epoch: 0,
            service_delivered: 0.0,
            cold_starts: 0,
            evictions: 0,
            containers_created: 0,
            outstanding: 0,
            log: None,
        })
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn take_log(&mut self) -> Vec<NodeLogEntry> {
        self.log.as_mut().map(core::mem::take).unwrap_or_default()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn queue(&self) -> &PriorityQueue {
        &self.queue
    }

    pub fn containers(&self) -> impl Iterator<Item = &Container> {
        self.containers.values()
    }

    pub fn executions(&self) -> impl Iterator<Item = &Execution> {
        self.executions.values()
    }

    pub fn clock(&self) -> Micros {
        self.clock
    }

    /// Containers currently running a call.
    pub fn busy_count(&self) -> usize {
        self.executions.len()
    }

    /// Running plus cold-starting containers; bounded by `cores` in CPU mode.
    pub fn occupied_slots(&self) -> usize {
        self.executions.len() + self.starting.len()
    }

    pub fn cold_start_count(&self) -> u64 {
        self.cold_starts
    }

    pub fn eviction_count(&self) -> u64 {
        self.evictions
    }

    pub fn containers_created(&self) -> u64 {
        self.containers_created
    }

    /// Calls received and not yet completed.
    pub fn outstanding(&self) -> usize {
        self.outstanding
    }

    /// Total work delivered to calls so far, in core-microseconds.
    pub fn service_delivered(&self) -> f64 {
        self.service_delivered
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn live_memory_mb(&self) -> u64 {
        self.containers.len() as u64 * self.config.container_memory_mb
    }

    fn fits_another(&self) -> bool {
        self.live_memory_mb() + self.config.container_memory_mb <= self.config.memory_pool_mb
    }

    fn log(
        &mut self,
        time: Micros,
        event: NodeEventKind,
        container: Option<ContainerId>,
        function: Option<usize>,
        request_id: Option<u64>,
    ) {
        if let Some(log) = self.log.as_mut() {
            log.push(NodeLogEntry {
                time,
                event,
                container,
                function,
                request_id,
            });
        }
    }

    fn create_container(&mut self, function: Option<usize>, state: ContainerState, now: Micros) -> ContainerId {
        let id = self.next_container;
        self.next_container += 1;
        self.containers_created += 1;
        self.containers.insert(
            id,
            Container {
                id,
                function,
                state,
                memory_mb: self.config.container_memory_mb,
                last_used: now,
            },
        );
        id
    }

    /// Populate the free pool before measurement: `cores` containers per
    /// function, created round-robin over the catalog until memory runs out,
    /// and `cores` observed runs per function in the estimator. Prewarmed
    /// containers are added afterwards if memory is left.
    pub fn warm_up(&mut self) -> Result<()> {
        let functions = self.profiles.len();
        let fits = self.config.container_capacity();
        if fits < functions as u64 {
            return Err(Error::WarmupInfeasible {
                fits,
                needed: functions,
            });
        }
        let cores = self.config.cores;
        'rounds: for _ in 0..cores {
            for f in 0..functions {
                if !self.fits_another() {
                    break 'rounds;
                }
                self.create_container(Some(f), ContainerState::Free, Micros::ZERO);
            }
        }
        for f in 0..functions {
            for _ in 0..cores {
                let d = sample_processing_time(&self.profiles[f], self.config.sampling, &mut self.rng);
                self.estimator.record_warmup(f, d)?;
            }
        }
        self.add_prewarm();
        Ok(())
    }

    /// Create the configured prewarmed containers, memory permitting.
    pub fn add_prewarm(&mut self) {
        for _ in 0..self.config.prewarm_count {
            if !self.fits_another() {
                break;
            }
            self.create_container(None, ContainerState::Prewarm, Micros::ZERO);
        }
    }

    fn check_clock(&mut self, now: Micros) -> Result<()> {
        if now < self.clock {
            return Err(Error::ClockRegression { last: self.clock, now });
        }
        Ok(())
    }

    /// Receive a call at `now`: log the receipt, fix its priority, queue it
    /// and start whatever can start.
    pub fn submit(&mut self, request: Request, now: Micros, timers: &mut Vec<Timer>) -> Result<()> {
        self.check_clock(now)?;
        if request.function >= self.profiles.len() {
            return Err(Error::UnknownFunctionIndex(request.function));
        }
        self.advance(now);
        self.estimator.record_receipt(request.function, now)?;
        let priority = match self.config.strategy {
            Strategy::Baseline => now.as_ms_f64(),
            st => compute_priority(st, request.function, now, &self.estimator, now)?,
        };
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.outstanding += 1;
        self.log(
            now,
            NodeEventKind::Receive,
            None,
            Some(request.function),
            Some(request.id),
        );
        self.queue.push(PrioritizedRequest {
            request,
            receipt: now,
            priority,
            sequence,
        });
        self.try_dispatch(now, timers)?;
        self.reschedule(now, timers);
        Ok(())
    }

    fn try_dispatch(&mut self, now: Micros, timers: &mut Vec<Timer>) -> Result<()> {
        while !self.queue.is_empty() {
            if self.config.mode == ExecutionMode::ProposedCpu && self.occupied_slots() >= self.config.cores as usize {
                break;
            }
            let item = self.queue.pop_min().expect("queue is non-empty");
            let outcome = self.dispatch(item.request.function, now);
            match outcome {
                DispatchOutcome::Queued => {
                    self.queue.push(item);
                    break;
                }
                DispatchOutcome::WarmStart(c) => {
                    self.log(
                        now,
                        NodeEventKind::WarmStart,
                        Some(c),
                        Some(item.request.function),
                        Some(item.request.id),
                    );
                    self.start_execution(c, item, false, now)?;
                }
                ref cold => {
                    let c = cold.container().expect("cold outcome has a container");
                    self.begin_cold_start(c, item, now, timers);
                }
            }
        }
        Ok(())
    }

    /// Place a call of `function` according to the node's mode. Containers
    /// are claimed as a side effect; nothing is claimed on `Queued`.
    pub fn dispatch(&mut self, function: usize, now: Micros) -> DispatchOutcome {
        match self.config.mode {
            ExecutionMode::BaselineMemory => self.dispatch_baseline(function, now),
            ExecutionMode::ProposedCpu => self.dispatch_proposed(function, now),
        }
    }

    pub fn dispatch_baseline(&mut self, function: usize, now: Micros) -> DispatchOutcome {
        self.place(function, now)
    }

    pub fn dispatch_proposed(&mut self, function: usize, now: Micros) -> DispatchOutcome {
        if self.occupied_slots() >= self.config.cores as usize {
            return DispatchOutcome::Queued;
        }
        self.place(function, now)
    }

    fn place(&mut self, function: usize, now: Micros) -> DispatchOutcome {
        // most recently used matching free container
        let warm = self
            .containers
            .values()
            .filter(|c| c.state == ContainerState::Free && c.function == Some(function))
            .max_by_key(|c| (c.last_used, core::cmp::Reverse(c.id)))
            .map(|c| c.id);
        if let Some(id) = warm {
            let c = self.containers.get_mut(&id).expect("container exists");
            c.state = ContainerState::Busy;
            return DispatchOutcome::WarmStart(id);
        }

        let prewarm = self
            .containers
            .values()
            .find(|c| c.state == ContainerState::Prewarm)
            .map(|c| c.id);
        if let Some(id) = prewarm {
            let c = self.containers.get_mut(&id).expect("container exists");
            c.function = Some(function);
            c.state = ContainerState::ColdStarting;
            return DispatchOutcome::ColdStartFromPrewarm(id);
        }

        if self.fits_another() {
            let id = self.create_container(Some(function), ContainerState::ColdStarting, now);
            return DispatchOutcome::ColdStartNew(id);
        }

        // least recently used idle containers go first
        let mut idle: Vec<(Micros, ContainerId)> = self
            .containers
            .values()
            .filter(|c| matches!(c.state, ContainerState::Free | ContainerState::Prewarm))
            .map(|c| (c.last_used, c.id))
            .collect();
        idle.sort_unstable();
        let cm = self.config.container_memory_mb;
        let mut freed = 0;
        let mut victims = Vec::new();
        for &(_, id) in &idle {
            if self.live_memory_mb() - freed + cm <= self.config.memory_pool_mb {
                break;
            }
            freed += cm;
            victims.push(id);
        }
        if self.live_memory_mb() - freed + cm > self.config.memory_pool_mb {
            return DispatchOutcome::Queued;
        }
        for &id in &victims {
            let c = self.containers.remove(&id).expect("victim exists");
            self.evictions += 1;
            self.log(now, NodeEventKind::Evict, Some(id), c.function, None);
        }
        let id = self.create_container(Some(function), ContainerState::ColdStarting, now);
        DispatchOutcome::ColdStartAfterEviction {
            container: id,
            evicted: victims,
        }
    }

    fn cold_start_delay(&mut self) -> Micros {
        match self.config.cold_start {
            ColdStartModel::Fixed(d) => d,
            ColdStartModel::Uniform { min, max } => Micros(self.rng.random_range(min.0..=max.0)),
        }
    }

    fn begin_cold_start(
        &mut self,
        container: ContainerId,
        item: PrioritizedRequest,
        now: Micros,
        timers: &mut Vec<Timer>,
    ) {
        self.cold_starts += 1;
        self.log(
            now,
            NodeEventKind::ColdStart,
            Some(container),
            Some(item.request.function),
            Some(item.request.id),
        );
        let delay = self.cold_start_delay();
        self.starting.insert(container, item);
        timers.push(Timer {
            at: now + delay,
            kind: TimerKind::ColdStartDone(container),
        });
    }

    pub fn on_cold_start_done(&mut self, container: ContainerId, now: Micros, timers: &mut Vec<Timer>) -> Result<()> {
        self.check_clock(now)?;
        self.advance(now);
        let item = self
            .starting
            .remove(&container)
            .ok_or(Error::InvalidConfig("cold start finished on an idle container"))?;
        self.containers
            .get_mut(&container)
            .expect("starting container exists")
            .state = ContainerState::Busy;
        self.start_execution(container, item, true, now)?;
        self.reschedule(now, timers);
        Ok(())
    }

    fn start_execution(
        &mut self,
        container: ContainerId,
        request: PrioritizedRequest,
        cold: bool,
        now: Micros,
    ) -> Result<()> {
        self.advance(now);
        let f = request.request.function;
        let work = sample_processing_time(&self.profiles[f], self.config.sampling, &mut self.rng);
        let order = self.next_order;
        self.next_order += 1;
        self.log(
            now,
            NodeEventKind::ExecStart,
            Some(container),
            Some(f),
            Some(request.request.id),
        );
        self.executions.insert(
            container,
            Execution {
                request,
                work,
                started: now,
                cold,
                finish_virtual: self.virtual_work + work.0 as f64,
                order,
            },
        );
        Ok(())
    }

    /// Per-call progress rate with `running` calls on the node.
    pub fn rate_for(&self, running: usize) -> f64 {
        let cores = self.config.cores as usize;
        match self.config.mode {
            ExecutionMode::ProposedCpu => 1.0,
            ExecutionMode::BaselineMemory if running <= cores => 1.0,
            ExecutionMode::BaselineMemory => {
                cores as f64 / running as f64 / (1.0 + self.config.context_switch_overhead)
            }
        }
    }

    /// Current per-call progress rate, in `(0, 1]`.
    pub fn progress_rate(&self) -> f64 {
        self.rate_for(self.executions.len())
    }

    /// Move the virtual work clock to `now` at the current rate.
    fn advance(&mut self, now: Micros) {
        if now > self.clock {
            let dt = (now - self.clock).0 as f64;
            let k = self.executions.len();
            if k > 0 {
                let rate = self.rate_for(k);
                self.virtual_work += dt * rate;
                self.service_delivered += dt * rate * k as f64;
            }
            self.clock = now;
        }
    }

    /// Re-project the next completion after the running set changed.
    /// Nothing changes for calls already running in CPU mode (rate stays 1).
    pub fn recompute_rates(&mut self, now: Micros, timers: &mut Vec<Timer>) {
        self.advance(now);
        self.reschedule(now, timers);
    }

    fn reschedule(&mut self, now: Micros, timers: &mut Vec<Timer>) {
        self.epoch += 1;
        let next = self
            .executions
            .iter()
            .min_by(|a, b| {
                a.1.finish_virtual
                    .total_cmp(&b.1.finish_virtual)
                    .then(a.1.order.cmp(&b.1.order))
            })
            .map(|(&c, e)| (c, e.finish_virtual));
        if let Some((container, finish)) = next {
            let remaining = (finish - self.virtual_work).max(0.0);
            let dt = libm::round(remaining / self.progress_rate()) as u64;
            timers.push(Timer {
                at: now + Micros(dt),
                kind: TimerKind::ExecutionDone {
                    container,
                    epoch: self.epoch,
                },
            });
        }
    }

    /// Finish the call on `container` if `epoch` is current. Returns the
    /// completion record, or `None` for a stale timer.
    pub fn on_execution_complete(
        &mut self,
        container: ContainerId,
        epoch: u64,
        now: Micros,
        timers: &mut Vec<Timer>,
    ) -> Result<Option<CompletionRecord>> {
        if epoch != self.epoch {
            return Ok(None);
        }
        self.check_clock(now)?;
        self.advance(now);
        let exec = self
            .executions
            .remove(&container)
            .ok_or(Error::InvalidConfig("completion on an idle container"))?;
        let f = exec.request.request.function;
        self.estimator.record_completion(f, now - exec.started, now)?;
        let c = self.containers.get_mut(&container).expect("running container exists");
        c.state = ContainerState::Free;
        c.last_used = now;
        self.outstanding -= 1;
        self.log(
            now,
            NodeEventKind::ExecDone,
            Some(container),
            Some(f),
            Some(exec.request.request.id),
        );
        let record = CompletionRecord {
            request_id: exec.request.request.id,
            function: f,
            gen_time: exec.request.request.gen_time,
            receipt: exec.request.receipt,
            processing: exec.work,
            completion: now,
            cold_start: exec.cold,
            node: self.id,
        };
        self.try_dispatch(now, timers)?;
        self.reschedule(now, timers);
        Ok(Some(record))
    }
}
