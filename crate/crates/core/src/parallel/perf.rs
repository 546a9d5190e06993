//! Per-kernel wall-clock counters.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// Kernels with their own timing row. Anything else lands in `other`.
pub const KERNELS: [&str; 10] = [
    "write-lists",
    "init-forces",
    "bond-orders",
    "3-body",
    "4-body",
    "nonbonded",
    "aggregate-forces",
    "qeq",
    "species",
    "other",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerfCounters {
    seconds: [f64; KERNELS.len()],
    records: usize,
}

fn slot(name: &str) -> usize {
    KERNELS
        .iter()
        .position(|k| *k == name)
        .unwrap_or(KERNELS.len() - 1)
}

impl PerfCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `elapsed` to `kernel`. Unknown names count as `other`.
    pub fn record(&mut self, kernel: &str, elapsed: Duration) {
        self.seconds[slot(kernel)] += elapsed.as_secs_f64();
        self.records += 1;
    }

    /// Runs `f` and charges its wall time to `kernel`.
    pub fn time<T>(&mut self, kernel: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(kernel, start.elapsed());
        out
    }

    pub fn seconds(&self, kernel: &str) -> f64 {
        self.seconds[slot(kernel)]
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    /// Sum over all rows.
    pub fn total(&self) -> f64 {
        self.seconds.iter().sum()
    }

    pub fn merge(&mut self, other: &PerfCounters) {
        for (a, b) in self.seconds.iter_mut().zip(other.seconds) {
            *a += b;
        }
        self.records += other.records;
    }

    /// Report rows `(kernel, seconds, percent)`. When `wall` is given, time
    /// not covered by any kernel is folded into `other` so the rows add up
    /// to the wall time.
    pub fn rows(&self, wall: Option<Duration>) -> Vec<(&'static str, f64, f64)> {
        if self.is_empty() && wall.is_none() {
            return Vec::new();
        }
        let mut secs = self.seconds;
        let mut total = self.total();
        if let Some(w) = wall {
            let w = w.as_secs_f64();
            if w > total {
                secs[KERNELS.len() - 1] += w - total;
                total = w;
            }
        }
        KERNELS
            .iter()
            .zip(secs)
            .map(|(k, s)| (*k, s, if total > 0.0 { 100.0 * s / total } else { 0.0 }))
            .collect()
    }

    /// CSV `kernel,seconds,percent` with a closing `total` row.
    pub fn report_csv(&self, wall: Option<Duration>) -> String {
        let rows = self.rows(wall);
        let mut out = String::from("kernel,seconds,percent\n");
        let mut total = 0.0;
        for (k, s, p) in &rows {
            total += s;
            let _ = writeln!(out, "{k},{s:.6},{p:.2}");
        }
        let _ = writeln!(out, "total,{total:.6},{:.2}", if rows.is_empty() { 0.0 } else { 100.0 });
        out
    }
}
