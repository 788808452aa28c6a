//! Node-level scheduling for FaaS worker nodes.
//!
//! This crate holds the algorithmic core: the function catalog and seeded
//! workload generators, the per-function history estimator, the priority
//! strategies and their queue, the container-pool node model in both the
//! memory-based (processor sharing) and CPU-based (one core per busy
//! container) execution modes, the discrete-event engine that drives one or
//! more nodes, and the response-time/stretch statistics.
//!
//! It is `no_std` and only needs `alloc`. File formats, configuration and
//! the experiment driver live in the `nodesched` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod node;
pub mod policy;
pub mod time;
pub mod workload;

pub use engine::{run_cluster, run_single, Balancer, ClusterConfig, CompletionRecord, Engine};
pub use error::{Error, Result};
pub use estimator::{Estimator, WindowBasis};
pub use node::{ColdStartModel, ExecutionMode, Node, NodeConfig};
pub use policy::{PrioritizedRequest, PriorityQueue, Strategy};
pub use time::Micros;
pub use workload::{FunctionCatalog, FunctionProfile, SamplingMode, Scenario};
