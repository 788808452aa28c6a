//! Per-function history kept by one node.
//!
//! The expected processing time of a function is the mean of its (at most)
//! ten most recent observed durations, or zero if it has never run. The
//! node also remembers when each function was last received and how many
//! calls it saw in a sliding window of length `T` (60 s by default).

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::time::Micros;

/// Number of recent durations averaged by the estimate.
pub const HISTORY_LEN: usize = 10;

/// Which timestamps feed the sliding-window call count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowBasis {
    /// Receipt times at the node.
    #[default]
    Receipts,
    /// Completion times at the node.
    Completions,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunctionHistory {
    recent: VecDeque<Micros>,
    last_receipt: Option<Micros>,
    previous_receipt: Option<Micros>,
    window_times: VecDeque<Micros>,
}

impl FunctionHistory {
    pub fn recent_durations(&self) -> impl Iterator<Item = Micros> + '_ {
        self.recent.iter().copied()
    }

    pub fn last_receipt(&self) -> Option<Micros> {
        self.last_receipt
    }

    /// Receipt preceding the most recent one.
    pub fn previous_receipt(&self) -> Option<Micros> {
        self.previous_receipt
    }

    pub fn window_times(&self) -> impl Iterator<Item = Micros> + '_ {
        self.window_times.iter().copied()
    }

    fn prune(&mut self, now: Micros, window: Micros) {
        // keep (now - T, now]
        while let Some(&front) = self.window_times.front() {
            if front.0 + window.0 <= now.0 {
                self.window_times.pop_front();
            } else {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    histories: Vec<FunctionHistory>,
    window: Micros,
    basis: WindowBasis,
    clock: Micros,
}

impl Estimator {
    pub fn new(functions: usize, window: Micros, basis: WindowBasis) -> Self {
        Estimator {
            histories: alloc::vec![FunctionHistory::default(); functions],
            window,
            basis,
            clock: Micros::ZERO,
        }
    }

    pub fn window(&self) -> Micros {
        self.window
    }

    pub fn basis(&self) -> WindowBasis {
        self.basis
    }

    pub fn history(&self, function: usize) -> Result<&FunctionHistory> {
        self.histories
            .get(function)
            .ok_or(Error::UnknownFunctionIndex(function))
    }

    fn history_mut(&mut self, function: usize) -> Result<&mut FunctionHistory> {
        self.histories
            .get_mut(function)
            .ok_or(Error::UnknownFunctionIndex(function))
    }

    fn advance_clock(&mut self, now: Micros) -> Result<()> {
        if now < self.clock {
            return Err(Error::ClockRegression { last: self.clock, now });
        }
        self.clock = now;
        Ok(())
    }

    /// Store an observed processing time. `now` is the completion instant,
    /// used only when the window counts completions.
    pub fn record_completion(&mut self, function: usize, duration: Micros, now: Micros) -> Result<()> {
        self.history_mut(function)?;
        if self.basis == WindowBasis::Completions {
            self.advance_clock(now)?;
        }
        let window = self.window;
        let basis = self.basis;
        let h = self.history_mut(function)?;
        if h.recent.len() == HISTORY_LEN {
            h.recent.pop_front();
        }
        h.recent.push_back(duration);
        if basis == WindowBasis::Completions {
            h.window_times.push_back(now);
            h.prune(now, window);
        }
        Ok(())
    }

    /// Seed the duration buffer without touching the sliding window.
    pub fn record_warmup(&mut self, function: usize, duration: Micros) -> Result<()> {
        let h = self.history_mut(function)?;
        if h.recent.len() == HISTORY_LEN {
            h.recent.pop_front();
        }
        h.recent.push_back(duration);
        Ok(())
    }

    /// Mean of the buffered durations in microseconds, 0 when empty.
    pub fn expected_processing_us(&self, function: usize) -> Result<f64> {
        let h = self.history(function)?;
        if h.recent.is_empty() {
            return Ok(0.0);
        }
        let sum: u64 = h.recent.iter().map(|d| d.0).sum();
        Ok(sum as f64 / h.recent.len() as f64)
    }

    /// Expected processing time in milliseconds.
    pub fn expected_processing_ms(&self, function: usize) -> Result<f64> {
        Ok(self.expected_processing_us(function)? / 1_000.0)
    }

    pub fn record_receipt(&mut self, function: usize, now: Micros) -> Result<()> {
        self.history_mut(function)?;
        self.advance_clock(now)?;
        let window = self.window;
        let basis = self.basis;
        let h = self.history_mut(function)?;
        h.previous_receipt = h.last_receipt;
        h.last_receipt = Some(now);
        if basis == WindowBasis::Receipts {
            h.window_times.push_back(now);
            h.prune(now, window);
        }
        Ok(())
    }

    /// Calls of `function` in `(now - T, now]`.
    pub fn calls_in_window(&self, function: usize, now: Micros) -> Result<usize> {
        let h = self.history(function)?;
        Ok(h.window_times
            .iter()
            .filter(|t| t.0 <= now.0 && t.0 + self.window.0 > now.0)
            .count())
    }
}
