//! Per-worker throughput over sliding windows.
//!
//! Each completed worker step logs its samples, its push-arrival time, and
//! its pipeline busy time (pull latency + compute + push latency, excluding
//! any barrier wait). Wall-window throughput — samples completed in the
//! trailing window divided by the window — is what traces report; it dips
//! while a worker idles at a barrier. The straggler detector instead reads
//! the busy-rate (samples per second of pipeline time), which isolates a
//! worker's own slowness from barrier-imposed idling.

use std::collections::BTreeMap;

use super::SimTime;

/// One completed worker step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    /// Push-arrival time of the step's gradient.
    pub completed_at: SimTime,
    pub samples: u64,
    /// Pull latency + compute + push latency, in nanoseconds.
    pub busy_ns: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ThroughputTracker {
    logs: BTreeMap<u32, Vec<Completion>>,
}

impl ThroughputTracker {
    pub fn record(&mut self, worker: u32, completion: Completion) {
        self.logs.entry(worker).or_default().push(completion);
    }

    fn window_entries(&self, worker: u32, now: SimTime, window: SimTime) -> &[Completion] {
        let Some(log) = self.logs.get(&worker) else { return &[] };
        // Window start clamps to simulation start.
        let start = now.saturating_sub(window);
        let lo = log.partition_point(|c| c.completed_at <= start);
        let hi = log.partition_point(|c| c.completed_at <= now);
        &log[lo..hi]
    }

    /// Samples completed in the trailing window divided by the window
    /// length, in samples per second.
    pub fn wall_window(&self, worker: u32, now: SimTime, window: SimTime) -> f64 {
        assert!(window > SimTime::ZERO, "window must be positive");
        let samples: u64 =
            self.window_entries(worker, now, window).iter().map(|c| c.samples).sum();
        samples as f64 / window.as_secs_f64()
    }

    /// Samples per second of pipeline busy time over the trailing window;
    /// `None` when the worker completed nothing in the window.
    pub fn busy_rate(&self, worker: u32, now: SimTime, window: SimTime) -> Option<f64> {
        let entries = self.window_entries(worker, now, window);
        if entries.is_empty() {
            return None;
        }
        let samples: u64 = entries.iter().map(|c| c.samples).sum();
        let busy_ns: u64 = entries.iter().map(|c| c.busy_ns).sum();
        if busy_ns == 0 {
            return None;
        }
        Some(samples as f64 / (busy_ns as f64 / 1e9))
    }

    /// Busy-rates of the given workers, skipping any without completions in
    /// the window.
    pub fn busy_rates(
        &self,
        workers: impl IntoIterator<Item = u32>,
        now: SimTime,
        window: SimTime,
    ) -> BTreeMap<u32, f64> {
        workers
            .into_iter()
            .filter_map(|w| self.busy_rate(w, now, window).map(|r| (w, r)))
            .collect()
    }

    /// Cluster mean and population standard deviation of per-worker
    /// wall-window throughput.
    pub fn cluster_mean_sigma(
        &self,
        workers: impl IntoIterator<Item = u32>,
        now: SimTime,
        window: SimTime,
    ) -> (f64, f64) {
        let rates: Vec<f64> =
            workers.into_iter().map(|w| self.wall_window(w, now, window)).collect();
        if rates.is_empty() {
            return (0.0, 0.0);
        }
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}
