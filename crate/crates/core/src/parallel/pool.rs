//! Persistent worker pool. Workers live for the whole simulation and wait
//! between phases by spinning briefly and then parking on a condvar.

use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

/// Spin iterations a worker burns before parking.
pub const DEFAULT_SPIN: u32 = 2_000;

type Job = dyn Fn(usize) + Sync;

#[derive(Clone, Copy)]
struct JobPtr(*const Job);

// The pointee is `Sync` and `run` keeps it alive until every worker is done.
unsafe impl Send for JobPtr {}

struct Slot {
    epoch: u64,
    job: Option<JobPtr>,
    shutdown: bool,
}

struct Shared {
    slot: Mutex<Slot>,
    wake: Condvar,
    epoch: AtomicU64,
    pending: AtomicUsize,
    done_lock: Mutex<()>,
    done: Condvar,
    panic: Mutex<Option<Box<dyn Any + Send>>>,
    spin: u32,
}

pub struct ThreadPool {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    threads: usize,
    launch: Mutex<()>,
}

impl std::fmt::Debug for ThreadPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThreadPool")
            .field("threads", &self.threads)
            .finish()
    }
}

impl ThreadPool {
    /// Pool of `threads` participants. The calling thread is participant 0,
    /// so `threads - 1` OS threads are spawned.
    pub fn new(threads: usize) -> Self {
        Self::with_spin(threads, DEFAULT_SPIN)
    }

    pub fn with_spin(threads: usize, spin: u32) -> Self {
        let threads = threads.max(1);
        let shared = Arc::new(Shared {
            slot: Mutex::new(Slot {
                epoch: 0,
                job: None,
                shutdown: false,
            }),
            wake: Condvar::new(),
            epoch: AtomicU64::new(0),
            pending: AtomicUsize::new(0),
            done_lock: Mutex::new(()),
            done: Condvar::new(),
            panic: Mutex::new(None),
            spin,
        });
        let workers = (1..threads)
            .map(|tid| {
                let shared = Arc::clone(&shared);
                std::thread::Builder::new()
                    .name(format!("reax-worker-{tid}"))
                    .spawn(move || worker_loop(&shared, tid))
                    .expect("failed to spawn worker thread")
            })
            .collect();
        ThreadPool {
            shared,
            workers,
            threads,
            launch: Mutex::new(()),
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Runs `f(tid)` once on every participant and returns when all have
    /// finished. A panic in any participant is re-raised here after the
    /// others have quiesced.
    pub fn run<F>(&self, f: F)
    where
        F: Fn(usize) + Sync,
    {
        let _guard = self.launch.lock().unwrap_or_else(|e| e.into_inner());
        if self.threads == 1 {
            f(0);
            return;
        }
        let job: &(dyn Fn(usize) + Sync + '_) = &f;
        // SAFETY: the pointer is only dereferenced by workers between the
        // epoch bump below and `pending` reaching zero, which we wait for
        // before `f` goes out of scope.
        let job: JobPtr = JobPtr(unsafe { std::mem::transmute::<&(dyn Fn(usize) + Sync + '_), &'static Job>(job) });
        let shared = &*self.shared;
        shared.pending.store(self.threads - 1, Ordering::SeqCst);
        {
            let mut slot = shared.slot.lock().unwrap();
            slot.epoch += 1;
            slot.job = Some(job);
            shared.epoch.store(slot.epoch, Ordering::Release);
        }
        shared.wake.notify_all();

        let own = panic::catch_unwind(AssertUnwindSafe(|| f(0)));

        let mut spins = 0;
        while shared.pending.load(Ordering::Acquire) != 0 && spins < shared.spin {
            std::hint::spin_loop();
            spins += 1;
        }
        if shared.pending.load(Ordering::Acquire) != 0 {
            let mut g = shared.done_lock.lock().unwrap();
            while shared.pending.load(Ordering::Acquire) != 0 {
                g = shared.done.wait(g).unwrap();
            }
        }
        shared.slot.lock().unwrap().job = None;

        if let Err(p) = own {
            shared.panic.lock().unwrap_or_else(|e| e.into_inner()).take();
            panic::resume_unwind(p);
        }
        let worker_panic = shared.panic.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(p) = worker_panic {
            panic::resume_unwind(p);
        }
    }
}

fn worker_loop(shared: &Shared, tid: usize) {
    let mut seen = 0u64;
    loop {
        let mut spins = 0;
        while shared.epoch.load(Ordering::Acquire) == seen && spins < shared.spin {
            std::hint::spin_loop();
            spins += 1;
            if spins % 64 == 0 {
                std::thread::yield_now();
            }
        }
        let job = {
            let mut slot = shared.slot.lock().unwrap();
            while slot.epoch == seen && !slot.shutdown {
                slot = shared.wake.wait(slot).unwrap();
            }
            if slot.shutdown {
                return;
            }
            seen = slot.epoch;
            slot.job.expect("epoch advanced without a job")
        };
        // SAFETY: see `ThreadPool::run`.
        let result = panic::catch_unwind(AssertUnwindSafe(|| unsafe { (*job.0)(tid) }));
        if let Err(p) = result {
            let mut slot = shared.panic.lock().unwrap();
            if slot.is_none() {
                *slot = Some(p);
            }
        }
        if shared.pending.fetch_sub(1, Ordering::AcqRel) == 1 {
            let _g = shared.done_lock.lock().unwrap();
            shared.done.notify_all();
        }
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        {
            let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
            slot.shutdown = true;
        }
        self.shared.wake.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn every_participant_runs_once_per_phase() {
        let pool = ThreadPool::new(4);
        let hits: Vec<AtomicUsize> = (0..4).map(|_| AtomicUsize::new(0)).collect();
        for _ in 0..100 {
            pool.run(|tid| {
                hits[tid].fetch_add(1, Ordering::Relaxed);
            });
        }
        for h in &hits {
            assert_eq!(h.load(Ordering::Relaxed), 100);
        }
    }

    #[test]
    fn borrows_caller_stack() {
        let pool = ThreadPool::new(3);
        let data = vec![1u64, 2, 3];
        let total = AtomicUsize::new(0);
        pool.run(|tid| {
            total.fetch_add(data[tid] as usize, Ordering::Relaxed);
        });
        assert_eq!(total.load(Ordering::Relaxed), 6);
    }

    #[test]
    fn worker_panic_propagates_and_pool_survives() {
        let pool = ThreadPool::new(3);
        let r = panic::catch_unwind(AssertUnwindSafe(|| {
            pool.run(|tid| {
                if tid == 2 {
                    panic!("boom");
                }
            })
        }));
        assert!(r.is_err());
        let count = AtomicUsize::new(0);
        pool.run(|_| {
            count.fetch_add(1, Ordering::Relaxed);
        });
        assert_eq!(count.load(Ordering::Relaxed), 3);
    }

    #[test]
    fn single_thread_runs_inline() {
        let pool = ThreadPool::new(1);
        let id = std::thread::current().id();
        pool.run(|tid| {
            assert_eq!(tid, 0);
            assert_eq!(std::thread::current().id(), id);
        });
    }
}
