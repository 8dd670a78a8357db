//! A small work queue for independent runs.
//!
//! Workers pull job indices from a shared counter; results flow through a
//! channel to the calling thread, which hands them to the sink in job order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "CLIPWAVE_THREADS";

/// Worker count from [`THREADS_ENV`], else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `work` on every job with `threads` workers and passes each result to
/// `sink` in job order. Returns early with the sink's first error.
pub fn run_ordered<J, R, E, W, S>(jobs: &[J], threads: usize, work: W, mut sink: S) -> Result<(), E>
where
    J: Sync,
    R: Send,
    W: Fn(&J) -> R + Sync,
    S: FnMut(usize, R) -> Result<(), E>,
{
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, R)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                if tx.send((i, work(&jobs[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(r) = pending.remove(&expected) {
                if let Err(e) = sink(expected, r) {
                    // stop handing out work; running jobs finish on their own
                    next.store(jobs.len(), Ordering::Relaxed);
                    return Err(e);
                }
                expected += 1;
            }
        }
        Ok(())
    })
}
