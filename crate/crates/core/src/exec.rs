//! Order-preserving map over independent work items.
//!
//! The core crate runs everything on the calling thread; the `ampsure`
//! crate supplies a thread-pool implementation.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Applies `f(index, item)` to every item, returning results in input
    /// order.
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}
