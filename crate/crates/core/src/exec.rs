//! Pluggable execution of independent work items.

use alloc::vec::Vec;

/// Maps a function over `0..len`, returning results in index order.
///
/// Implementations may run items concurrently but must return the same
/// vector a sequential loop would.
pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}
