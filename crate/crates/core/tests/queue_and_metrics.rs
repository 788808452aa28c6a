//! Priority queue and summary statistics against sort-based oracles.

use nodesched_core::metrics::{box_plot, summarize};
use nodesched_core::policy::Request;
use nodesched_core::{Micros, PrioritizedRequest, PriorityQueue};
use proptest::prelude::*;

fn item(priority: f64, sequence: u64) -> PrioritizedRequest {
    PrioritizedRequest {
        request: Request {
            id: sequence,
            function: 0,
            gen_time: Micros::ZERO,
        },
        receipt: Micros::ZERO,
        priority,
        sequence,
    }
}

/// Percentile by the textbook nearest-rank definition: smallest value with
/// at least `p` percent of the samples at or below it.
fn oracle_rank(values: &[f64], p: u32) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    *sorted
        .iter()
        .enumerate()
        .find(|(i, _)| (*i as f64 + 1.0) * 100.0 >= p as f64 * n)
        .map(|(_, v)| v)
        .unwrap()
}

proptest! {
    #[test]
    fn queue_pops_in_sorted_order(priorities in proptest::collection::vec(0u32..50, 0..100)) {
        let mut q = PriorityQueue::new();
        for (seq, &p) in priorities.iter().enumerate() {
            q.push(item(p as f64, seq as u64));
        }
        let mut want: Vec<(u32, u64)> = priorities.iter().enumerate().map(|(s, &p)| (p, s as u64)).collect();
        want.sort();
        let mut got = Vec::new();
        while let Some(x) = q.pop_min() {
            got.push((x.priority as u32, x.sequence));
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn interleaved_push_pop(ops in proptest::collection::vec(proptest::option::of(0u32..20), 1..100)) {
        let mut q = PriorityQueue::new();
        let mut model: Vec<(u32, u64)> = Vec::new();
        for (seq, op) in ops.into_iter().enumerate() {
            match op {
                Some(p) => {
                    q.push(item(p as f64, seq as u64));
                    model.push((p, seq as u64));
                }
                None => {
                    model.sort();
                    let want = if model.is_empty() { None } else { Some(model.remove(0)) };
                    prop_assert_eq!(q.pop_min().map(|x| (x.priority as u32, x.sequence)), want);
                }
            }
            prop_assert_eq!(q.len(), model.len());
        }
    }

    #[test]
    fn summary_matches_oracle(values in proptest::collection::vec(0.0f64..1e6, 1..300)) {
        let s = summarize(&values).unwrap();
        prop_assert_eq!(s.count, values.len());
        prop_assert_eq!(s.p50, oracle_rank(&values, 50));
        prop_assert_eq!(s.p75, oracle_rank(&values, 75));
        prop_assert_eq!(s.p95, oracle_rank(&values, 95));
        prop_assert_eq!(s.p99, oracle_rank(&values, 99));
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.min, min);
        prop_assert_eq!(s.max, max);
        prop_assert!(s.min <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((s.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
    }

    #[test]
    fn summary_ignores_order(mut values in proptest::collection::vec(0.0f64..1e3, 1..100), seed in any::<u64>()) {
        let before = summarize(&values).unwrap();
        // deterministic shuffle
        let mut state = seed | 1;
        for i in (1..values.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            values.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let after = summarize(&values).unwrap();
        prop_assert_eq!(before.p50, after.p50);
        prop_assert_eq!(before.p99, after.p99);
        prop_assert_eq!(before.min, after.min);
        prop_assert_eq!(before.max, after.max);
        prop_assert!((before.mean - after.mean).abs() <= 1e-9 * before.mean.max(1.0));
    }

    #[test]
    fn box_plot_whiskers_inside_fences(values in proptest::collection::vec(0.0f64..1e3, 1..200)) {
        let b = box_plot(&values).unwrap();
        let iqr = b.q3 - b.q1;
        prop_assert!(b.whisker_low <= b.q1 && b.q3 <= b.whisker_high);
        prop_assert!(b.whisker_low >= b.q1 - 1.5 * iqr);
        prop_assert!(b.whisker_high <= b.q3 + 1.5 * iqr);
        prop_assert!(values.contains(&b.whisker_low) && values.contains(&b.whisker_high));
    }
}

#[test]
fn hundred_values() {
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let s = summarize(&values).unwrap();
    assert_eq!((s.p50, s.p75, s.p95, s.p99, s.max), (50.0, 75.0, 95.0, 99.0, 100.0));
    assert_eq!(s.mean, 50.5);
}

#[test]
fn empty_input_is_rejected() {
    assert!(summarize(&[]).is_err());
    assert!(box_plot(&[]).is_err());
}
