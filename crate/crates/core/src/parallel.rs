//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the helpers fan out over the
//! current rayon pool. Without it, or inside [`sequential`], they run in
//! index order on the calling thread. Results are always returned in index
//! order, so reductions over them are independent of the schedule.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module forced onto the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.with(|flag| {
        let prev = flag.replace(true);
        let out = f();
        flag.set(prev);
        out
    })
}

/// True when helpers called here would fan out to more than one worker.
pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        !FORCE_SEQUENTIAL.with(Cell::get) && rayon::current_num_threads() > 1
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Maps `f` over `0..n`, collecting in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if is_parallel() {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, collecting in order.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if is_parallel() {
        data.par_iter().map(f).collect()
    } else {
        data.iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    data.iter().map(f).collect()
}

/// Maps `f` over `0..n` and folds the results into `acc` in index order.
/// Parallel runs collect all results before folding; sequential runs fold
/// each result as soon as it is produced. The fold order is the same, so
/// both give bit-identical results.
pub fn map_fold_ordered<U, A, F, G>(n: usize, mut acc: A, f: F, mut fold: G) -> A
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
    G: FnMut(&mut A, U),
{
    if is_parallel() {
        for u in map_indexed(n, f) {
            fold(&mut acc, u);
        }
    } else {
        for i in 0..n {
            fold(&mut acc, f(i));
        }
    }
    acc
}

/// Like [`map_fold_ordered`], but each item works in a scratch value built
/// by `make` and the fold also sees that scratch. Sequential runs reuse one
/// scratch for every item; parallel runs build one per item.
pub fn fold_with_scratch<S, R, A, M, F, G>(n: usize, make: M, work: F, mut acc: A, mut fold: G) -> A
where
    S: Send,
    R: Send,
    M: Fn() -> S + Sync + Send,
    F: Fn(usize, &mut S) -> R + Sync + Send,
    G: FnMut(&mut A, R, &S),
{
    if is_parallel() && n > 1 {
        let done = map_indexed(n, |i| {
            let mut s = make();
            let r = work(i, &mut s);
            (r, s)
        });
        for (r, s) in done {
            fold(&mut acc, r, &s);
        }
    } else {
        let mut s = make();
        for i in 0..n {
            let r = work(i, &mut s);
            fold(&mut acc, r, &s);
        }
    }
    acc
}

/// Workers available to the helpers in this module.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Caps the global pool at `threads` workers. Returns false when the pool
/// was already initialized or the feature is off.
pub fn init_global_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Element-wise sum of equally sized vectors, accumulated in slice order.
pub fn sum_in_order(parts: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for part in parts {
        for (a, &p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    }
    acc
}
