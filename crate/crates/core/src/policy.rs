//! Queueing strategies and the priority queue they feed.
//!
//! A priority is computed once, when the node receives a call, and never
//! revisited. Smaller priorities are served first; equal priorities are
//! served in receipt order.

use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::time::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Stock invoker: memory-bound pools, FIFO queue, no priorities.
    Baseline,
    /// Receipt time `r'`.
    Fifo,
    /// Shortest expected processing time, `E(p)`.
    Sept,
    /// Earliest expected completion time, `r' + E(p)`.
    Eect,
    /// Recent expected completion time, `r_prev + E(p)`.
    Rect,
    /// Fair choice, `#(f, -T) * E(p)`.
    Fc,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Baseline,
        Strategy::Fifo,
        Strategy::Sept,
        Strategy::Eect,
        Strategy::Rect,
        Strategy::Fc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Fifo => "fifo",
            Strategy::Sept => "sept",
            Strategy::Eect => "eect",
            Strategy::Rect => "rect",
            Strategy::Fc => "fc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or(Error::InvalidConfig("unknown strategy"))
    }
}

/// One action call as generated by a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub id: u64,
    pub function: usize,
    pub gen_time: Micros,
}

/// Priority in milliseconds for a call received at `receipt`.
///
/// The estimator must already contain this call's receipt, so the call
/// counts itself in the fair-choice window and `RECT` sees the receipt
/// before it. A function with no previous receipt uses its own receipt.
pub fn compute_priority(
    strategy: Strategy,
    function: usize,
    receipt: Micros,
    estimator: &Estimator,
    now: Micros,
) -> Result<f64> {
    let expected = || estimator.expected_processing_ms(function);
    Ok(match strategy {
        Strategy::Baseline => return Err(Error::NotApplicable),
        Strategy::Fifo => receipt.as_ms_f64(),
        Strategy::Sept => expected()?,
        Strategy::Eect => receipt.as_ms_f64() + expected()?,
        Strategy::Rect => {
            let previous = estimator.history(function)?.previous_receipt().unwrap_or(receipt);
            previous.as_ms_f64() + expected()?
        }
        Strategy::Fc => estimator.calls_in_window(function, now)? as f64 * expected()?,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PrioritizedRequest {
    pub request: Request,
    pub receipt: Micros,
    pub priority: f64,
    pub sequence: u64,
}

impl PrioritizedRequest {
    fn key(&self) -> (f64, u64) {
        (self.priority, self.sequence)
    }
}

impl PartialEq for PrioritizedRequest {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PrioritizedRequest {}

impl PartialOrd for PrioritizedRequest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PrioritizedRequest {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, sa) = self.key();
        let (b, sb) = other.key();
        a.total_cmp(&b).then(sa.cmp(&sb))
    }
}

/// Min-queue over `(priority, sequence)`.
#[derive(Debug, Clone, Default)]
pub struct PriorityQueue {
    heap: BinaryHeap<Reverse<PrioritizedRequest>>,
}

impl PriorityQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: PrioritizedRequest) {
        self.heap.push(Reverse(item));
    }

    pub fn pop_min(&mut self) -> Option<PrioritizedRequest> {
        self.heap.pop().map(|Reverse(item)| item)
    }

    pub fn peek_min(&self) -> Option<&PrioritizedRequest> {
        self.heap.peek().map(|Reverse(item)| item)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrioritizedRequest> {
        self.heap.iter().map(|Reverse(item)| item)
    }
}
