//! Threading runtime: persistent pool, chunked scheduling, privatized
//! accumulators and per-kernel timers.

mod accumulator;
mod perf;
mod pool;
mod schedule;

use std::marker::PhantomData;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

pub use accumulator::{
    reduce_privatized, EnergyTally, EnergyTerm, PrivatizedAccumulator, ThreadBuffers,
};
pub use perf::{PerfCounters, KERNELS};
pub use pool::{ThreadPool, DEFAULT_SPIN};
pub use schedule::{
    Dynamic, LaunchState, Schedule, SchedulePolicy, ScheduleRegistry, StaticBlocks, StaticCyclic,
    DEFAULT_CHUNK,
};

/// A worker pool paired with the schedule used for its parallel loops.
#[derive(Debug)]
pub struct Runtime {
    pool: ThreadPool,
    policy: SchedulePolicy,
}

impl Runtime {
    pub fn new(threads: usize, policy: SchedulePolicy) -> Self {
        Runtime {
            pool: ThreadPool::new(threads),
            policy,
        }
    }

    pub fn with_pool(pool: ThreadPool, policy: SchedulePolicy) -> Self {
        Runtime { pool, policy }
    }

    pub fn serial() -> Self {
        Self::new(1, SchedulePolicy::static_blocks())
    }

    pub fn threads(&self) -> usize {
        self.pool.threads()
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }

    pub fn policy(&self) -> &SchedulePolicy {
        &self.policy
    }

    /// Runs `body(tid, range)` over `[0, n)` with this runtime's policy.
    /// Every index is covered by exactly one call.
    pub fn for_chunks<F>(&self, n: usize, body: F)
    where
        F: Fn(usize, Range<usize>) + Sync,
    {
        self.for_chunks_with(n, &self.policy, body)
    }

    pub fn for_chunks_with<F>(&self, n: usize, policy: &SchedulePolicy, body: F)
    where
        F: Fn(usize, Range<usize>) + Sync,
    {
        if n == 0 {
            return;
        }
        let launch = LaunchState::new(n, self.threads(), policy.chunk);
        let schedule = &policy.schedule;
        self.pool.run(|tid| {
            schedule.drive(&launch, tid, &mut |r| body(tid, r));
        });
    }

    /// Like [`for_chunks`](Self::for_chunks) for fallible bodies. After the
    /// first error, remaining chunks are skipped and that error is returned.
    pub fn try_for_chunks<E, F>(&self, n: usize, body: F) -> Result<(), E>
    where
        E: Send,
        F: Fn(usize, Range<usize>) -> Result<(), E> + Sync,
    {
        let failed = AtomicBool::new(false);
        let first: Mutex<Option<E>> = Mutex::new(None);
        self.for_chunks(n, |tid, r| {
            if failed.load(Ordering::Relaxed) {
                return;
            }
            if let Err(e) = body(tid, r) {
                failed.store(true, Ordering::Relaxed);
                let mut slot = first.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(e);
                }
            }
        });
        match first.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `out[i] = f(i)` in parallel over contiguous blocks.
    pub fn fill_slice<T, F>(&self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let n = out.len();
        let shared = SharedSlice::new(out);
        self.for_chunks_with(n, &SchedulePolicy::static_blocks(), |_, r| {
            // SAFETY: static blocks are disjoint.
            let part = unsafe { shared.slice_mut(r.clone()) };
            for (slot, i) in part.iter_mut().zip(r) {
                *slot = f(i);
            }
        });
    }
}

/// Free-function form of [`Runtime::for_chunks_with`].
pub fn parallel_for_chunked<F>(runtime: &Runtime, n: usize, policy: &SchedulePolicy, body: F)
where
    F: Fn(usize, Range<usize>) + Sync,
{
    runtime.for_chunks_with(n, policy, body)
}

/// Mutable slice that several threads write through, each into a region
/// nobody else touches (CSR row segments, reserved slots, disjoint chunks).
pub struct SharedSlice<'a, T> {
    ptr: *mut T,
    len: usize,
    _marker: PhantomData<&'a mut [T]>,
}

unsafe impl<T: Send> Send for SharedSlice<'_, T> {}
unsafe impl<T: Send> Sync for SharedSlice<'_, T> {}

impl<'a, T> SharedSlice<'a, T> {
    pub fn new(slice: &'a mut [T]) -> Self {
        SharedSlice {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
            _marker: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// # Safety
    /// No other live reference may overlap `range`.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn slice_mut(&self, range: Range<usize>) -> &mut [T] {
        assert!(range.start <= range.end && range.end <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(range.start), range.end - range.start)
    }

    /// # Safety
    /// No other thread may access index `i` concurrently.
    #[inline]
    pub unsafe fn write(&self, i: usize, value: T) {
        assert!(i < self.len);
        *self.ptr.add(i) = value;
    }
}

/// Exclusive prefix sum: `offsets[i] = Σ_{k<i} counts[k]`, with a trailing
/// total so `offsets.len() == counts.len() + 1`.
pub fn exclusive_prefix_sum(counts: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(counts.len() + 1);
    let mut running = 0;
    offsets.push(0);
    for &c in counts {
        running += c;
        offsets.push(running);
    }
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::sync::atomic::AtomicUsize;

    fn executed(n: usize, threads: usize, policy: SchedulePolicy) -> Vec<usize> {
        let rt = Runtime::new(threads, policy);
        let hits: Vec<AtomicUsize> = (0..n).map(|_| AtomicUsize::new(0)).collect();
        rt.for_chunks(n, |_, r| {
            for i in r {
                hits[i].fetch_add(1, Ordering::Relaxed);
            }
        });
        hits.into_iter().map(|h| h.into_inner()).collect()
    }

    #[test]
    fn exactly_once_randomized() {
        let mut rng = StdRng::seed_from_u64(5);
        let registry = ScheduleRegistry::builtin();
        let pools: Vec<Runtime> = (1..=5)
            .map(|t| Runtime::new(t, SchedulePolicy::default()))
            .collect();
        for trial in 0..1000 {
            let n = rng.random_range(0..600);
            let chunk = rng.random_range(1..50);
            let rt = &pools[rng.random_range(0..pools.len())];
            let name = registry.names()[trial % 3];
            let policy = SchedulePolicy::by_name(name, chunk).unwrap();
            let hits: Vec<AtomicUsize> = (0..n).map(|_| AtomicUsize::new(0)).collect();
            rt.for_chunks_with(n, &policy, |_, r| {
                for i in r {
                    hits[i].fetch_add(1, Ordering::Relaxed);
                }
            });
            assert!(
                hits.iter().all(|h| h.load(Ordering::Relaxed) == 1),
                "n={n} chunk={chunk} threads={} schedule={name}",
                rt.threads()
            );
        }
    }

    #[test]
    fn zero_length_never_invokes_body() {
        let rt = Runtime::new(3, SchedulePolicy::default());
        rt.for_chunks(0, |_, _| panic!("called"));
    }

    #[test]
    fn privatized_integer_increments_match_serial() {
        let n = 100_000;
        let threads = 4;
        let rt = Runtime::new(threads, SchedulePolicy::dynamic(20));
        let mut rng = StdRng::seed_from_u64(9);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..1000)).collect();
        let bins: Vec<Mutex<Vec<u64>>> = (0..threads).map(|_| Mutex::new(vec![0; 1000])).collect();
        rt.for_chunks(n, |tid, r| {
            let mut local = bins[tid].lock().unwrap();
            for i in r {
                local[targets[i]] += i as u64;
            }
        });
        let mut reduced = vec![0u64; 1000];
        for b in bins {
            for (o, v) in reduced.iter_mut().zip(b.into_inner().unwrap()) {
                *o += v;
            }
        }
        let mut serial = vec![0u64; 1000];
        for (i, &t) in targets.iter().enumerate() {
            serial[t] += i as u64;
        }
        assert_eq!(reduced, serial);
    }

    #[test]
    fn try_for_chunks_returns_first_error() {
        let rt = Runtime::new(2, SchedulePolicy::dynamic(5));
        let r: Result<(), usize> = rt.try_for_chunks(100, |_, r| {
            if r.contains(&42) {
                Err(42)
            } else {
                Ok(())
            }
        });
        assert_eq!(r, Err(42));
        assert_eq!(rt.try_for_chunks::<(), _>(10, |_, _| Ok(())), Ok(()));
    }

    #[test]
    fn prefix_sum() {
        assert_eq!(exclusive_prefix_sum(&[3, 0, 2]), vec![0, 3, 3, 5]);
        assert_eq!(exclusive_prefix_sum(&[]), vec![0]);
    }

    proptest! {
        #[test]
        fn fill_slice_matches_map(n in 0usize..2000, threads in 1usize..5) {
            let rt = Runtime::new(threads, SchedulePolicy::default());
            let mut out = vec![0usize; n];
            rt.fill_slice(&mut out, |i| i * 3 + 1);
            prop_assert!(out.iter().enumerate().all(|(i, v)| *v == i * 3 + 1));
        }

        #[test]
        fn every_schedule_covers_range(n in 0usize..500, chunk in 1usize..40, threads in 1usize..4) {
            for name in ["static", "cyclic", "dynamic"] {
                let hits = executed(n, threads, SchedulePolicy::by_name(name, chunk).unwrap());
                prop_assert!(hits.iter().all(|h| *h == 1));
            }
        }
    }
}
