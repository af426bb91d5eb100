use fedah_core::Executor;
use rayon::prelude::*;

/// Runs each round's client updates on the rayon thread pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync,
    {
        let f = &f;
        items.into_par_iter().map(f).collect()
    }
}
