use alloc::string::String;

use crate::time::Micros;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("intensity {0} is not a non-negative multiple of 10")]
    InvalidIntensity(u32),
    #[error("core count must be at least 1")]
    InvalidCores,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function index {0} is out of range")]
    UnknownFunctionIndex(usize),
    #[error("invalid function profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: &'static str },
    #[error("duplicate function `{0}` in catalog")]
    DuplicateFunction(String),
    #[error("{requests} requests cannot be split evenly over {functions} functions")]
    UnevenScenario { requests: u64, functions: usize },
    #[error("clock went backwards: {now} after {last}")]
    ClockRegression { last: Micros, now: Micros },
    #[error("the baseline strategy does not compute priorities")]
    NotApplicable,
    #[error("memory pool holds {fits} containers, warm-up needs at least {needed}")]
    WarmupInfeasible { fits: u64, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no values to summarize")]
    EmptyInput,
    #[error("no idle-system median for function `{0}`")]
    MissingBaseline(String),
    #[error("simulation exceeded its budget of {0} events")]
    SimulationStuck(u64),
}
