//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops (batch embedding, exhaustive vector scans, similarity matrices,
//! per-query metric batches) take an [`Execution`] so callers and benches can
//! pick a strategy at runtime. Without the `parallel` feature every strategy
//! runs sequentially.

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Whether this strategy actually fans out on the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving map.
pub fn map<'a, T, R, F>(exec: Execution, items: &'a [T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&'a T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving fallible map; the first error (in input order) wins.
pub fn try_map<'a, T, R, E, F>(exec: Execution, items: &'a [T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&'a T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

/// Runs two closures, concurrently when allowed.
pub fn join<A, B, RA, RB>(exec: Execution, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return rayon::join(a, b);
    }
    let _ = exec;
    (a(), b())
}

/// Counting limit on concurrent in-flight calls (external embedding and chat requests).
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    active: parking_lot::Mutex<usize>,
    released: parking_lot::Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            active: parking_lot::Mutex::new(0),
            released: parking_lot::Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    /// Blocks until a slot is free; the slot is returned when the guard drops.
    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock();
        while *active >= self.max {
            self.released.wait(&mut active);
        }
        *active += 1;
        InFlightGuard { limit: self }
    }

    pub fn active(&self) -> usize {
        *self.active.lock()
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.limit.active.lock();
        *active -= 1;
        self.limit.released.notify_one();
    }
}
