//! Work-distribution strategies for splitting an index range over threads.
//!
//! Each strategy is a [`Schedule`] trait object registered by name in a
//! [`ScheduleRegistry`]; runs pick one through `schedule.mode`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{ReaxError, Result};

/// Default chunk size (atoms per task).
pub const DEFAULT_CHUNK: usize = 20;

/// Per-launch bookkeeping shared by the participants of one parallel phase.
#[derive(Debug)]
pub struct LaunchState {
    pub n: usize,
    pub threads: usize,
    pub chunk: usize,
    next: AtomicUsize,
}

impl LaunchState {
    pub fn new(n: usize, threads: usize, chunk: usize) -> Self {
        LaunchState {
            n,
            threads: threads.max(1),
            chunk: chunk.max(1),
            next: AtomicUsize::new(0),
        }
    }

    /// Claims the next `chunk` indices from the shared counter.
    #[inline]
    pub fn claim(&self) -> Option<Range<usize>> {
        let start = self.next.fetch_add(self.chunk, Ordering::Relaxed);
        (start < self.n).then(|| start..(start + self.chunk).min(self.n))
    }
}

pub trait Schedule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Feeds participant `tid` its share of `[0, launch.n)`.
    fn drive(&self, launch: &LaunchState, tid: usize, body: &mut dyn FnMut(Range<usize>));

    /// Deterministic model of the distribution: given a per-index cost, the
    /// total cost each thread ends up with. Dynamic strategies are modelled
    /// as greedy dispatch to the earliest-idle thread, which is what a shared
    /// counter produces when chunk run time is proportional to cost.
    fn assigned_cost(&self, costs: &[f64], threads: usize, chunk: usize) -> Vec<f64>;
}

/// Contiguous equal blocks, one per thread.
#[derive(Debug, Default)]
pub struct StaticBlocks;

/// Chunks handed out round-robin: chunk `c` goes to thread `c % threads`.
#[derive(Debug, Default)]
pub struct StaticCyclic;

/// Chunks claimed from a shared counter by whichever thread is free.
#[derive(Debug, Default)]
pub struct Dynamic;

fn block(n: usize, threads: usize, tid: usize) -> Range<usize> {
    (n * tid / threads)..(n * (tid + 1) / threads)
}

impl Schedule for StaticBlocks {
    fn name(&self) -> &'static str {
        "static"
    }

    fn drive(&self, launch: &LaunchState, tid: usize, body: &mut dyn FnMut(Range<usize>)) {
        let r = block(launch.n, launch.threads, tid);
        if !r.is_empty() {
            body(r);
        }
    }

    fn assigned_cost(&self, costs: &[f64], threads: usize, _chunk: usize) -> Vec<f64> {
        let threads = threads.max(1);
        (0..threads)
            .map(|t| costs[block(costs.len(), threads, t)].iter().sum())
            .collect()
    }
}

impl Schedule for StaticCyclic {
    fn name(&self) -> &'static str {
        "cyclic"
    }

    fn drive(&self, launch: &LaunchState, tid: usize, body: &mut dyn FnMut(Range<usize>)) {
        let mut start = tid * launch.chunk;
        while start < launch.n {
            body(start..(start + launch.chunk).min(launch.n));
            start += launch.threads * launch.chunk;
        }
    }

    fn assigned_cost(&self, costs: &[f64], threads: usize, chunk: usize) -> Vec<f64> {
        let threads = threads.max(1);
        let chunk = chunk.max(1);
        let mut out = vec![0.0; threads];
        for (c, part) in costs.chunks(chunk).enumerate() {
            out[c % threads] += part.iter().sum::<f64>();
        }
        out
    }
}

impl Schedule for Dynamic {
    fn name(&self) -> &'static str {
        "dynamic"
    }

    fn drive(&self, launch: &LaunchState, _tid: usize, body: &mut dyn FnMut(Range<usize>)) {
        while let Some(r) = launch.claim() {
            body(r);
        }
    }

    fn assigned_cost(&self, costs: &[f64], threads: usize, chunk: usize) -> Vec<f64> {
        let threads = threads.max(1);
        let mut out = vec![0.0f64; threads];
        for part in costs.chunks(chunk.max(1)) {
            // earliest-idle thread, lowest id on ties
            let t = (0..threads)
                .min_by(|&a, &b| out[a].total_cmp(&out[b]).then(a.cmp(&b)))
                .unwrap();
            out[t] += part.iter().sum::<f64>();
        }
        out
    }
}

/// Name → strategy table.
#[derive(Debug, Clone)]
pub struct ScheduleRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Schedule>>,
}

impl ScheduleRegistry {
    pub fn empty() -> Self {
        ScheduleRegistry {
            entries: BTreeMap::new(),
        }
    }

    /// `static`, `cyclic` and `dynamic`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(StaticBlocks));
        r.register(Arc::new(StaticCyclic));
        r.register(Arc::new(Dynamic));
        r
    }

    pub fn register(&mut self, schedule: Arc<dyn Schedule>) {
        self.entries.insert(schedule.name(), schedule);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Schedule>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| ReaxError::UnknownStrategy {
                kind: "schedule",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// Strategy plus chunk size.
#[derive(Debug, Clone)]
pub struct SchedulePolicy {
    pub schedule: Arc<dyn Schedule>,
    pub chunk: usize,
}

impl SchedulePolicy {
    pub fn new(schedule: Arc<dyn Schedule>, chunk: usize) -> Result<Self> {
        if chunk == 0 {
            return Err(ReaxError::InvalidParameter("chunk must be at least 1".into()));
        }
        Ok(SchedulePolicy { schedule, chunk })
    }

    pub fn by_name(name: &str, chunk: usize) -> Result<Self> {
        Self::new(ScheduleRegistry::builtin().get(name)?, chunk)
    }

    pub fn dynamic(chunk: usize) -> Self {
        SchedulePolicy {
            schedule: Arc::new(Dynamic),
            chunk: chunk.max(1),
        }
    }

    pub fn static_blocks() -> Self {
        SchedulePolicy {
            schedule: Arc::new(StaticBlocks),
            chunk: DEFAULT_CHUNK,
        }
    }

    pub fn name(&self) -> &'static str {
        self.schedule.name()
    }
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        Self::dynamic(DEFAULT_CHUNK)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(s: &dyn Schedule, n: usize, threads: usize, chunk: usize) -> Vec<Vec<Range<usize>>> {
        let launch = LaunchState::new(n, threads, chunk);
        (0..threads)
            .map(|tid| {
                let mut got = Vec::new();
                s.drive(&launch, tid, &mut |r| got.push(r));
                got
            })
            .collect()
    }

    #[test]
    fn dynamic_single_thread_sequential_chunks() {
        let got = collect(&Dynamic, 100, 1, 20);
        assert_eq!(got[0], vec![0..20, 20..40, 40..60, 60..80, 80..100]);
    }

    #[test]
    fn empty_range_never_calls_body() {
        for s in ScheduleRegistry::builtin().entries.values() {
            let got = collect(s.as_ref(), 0, 3, 20);
            assert!(got.iter().all(|g| g.is_empty()), "{}", s.name());
        }
    }

    #[test]
    fn static_blocks_are_contiguous() {
        let got = collect(&StaticBlocks, 10, 3, 20);
        assert_eq!(got, vec![vec![0..3], vec![3..6], vec![6..10]]);
    }

    #[test]
    fn cyclic_round_robin() {
        let got = collect(&StaticCyclic, 50, 2, 10);
        assert_eq!(got[0], vec![0..10, 20..30, 40..50]);
        assert_eq!(got[1], vec![10..20, 30..40]);
    }

    #[test]
    fn registry_lookup() {
        let r = ScheduleRegistry::builtin();
        assert_eq!(r.names(), ["cyclic", "dynamic", "static"]);
        assert_eq!(r.get("dynamic").unwrap().name(), "dynamic");
        let err = r.get("guided").unwrap_err();
        assert!(err.to_string().contains("dynamic"));
        assert!(SchedulePolicy::by_name("static", 0).is_err());
    }

    #[test]
    fn assigned_cost_conserves_total() {
        let costs: Vec<f64> = (0..997).map(|i| (i % 13) as f64).collect();
        let total: f64 = costs.iter().sum();
        for s in ScheduleRegistry::builtin().entries.values() {
            let per = s.assigned_cost(&costs, 5, 20);
            assert_eq!(per.len(), 5);
            assert!((per.iter().sum::<f64>() - total).abs() < 1e-9, "{}", s.name());
        }
    }
}
