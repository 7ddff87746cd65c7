//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] fans
//! work out over the rayon pool. Without it, or with
//! [`Execution::Sequential`], the same closures run in a plain loop. Outputs
//! are always collected in index order, so both paths return identical
//! vectors as long as each item draws from its own RNG stream.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this mode actually runs on multiple threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n`.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice together with each element's index.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(usize, &S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().enumerate().map(|(i, s)| f(i, s)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, s)| f(i, s)).collect()
}

/// Applies `f` to every element in place.
pub fn for_each_mut<S, F>(exec: Execution, items: &mut [S], f: F)
where
    S: Send,
    F: Fn(usize, &mut S) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        items.par_iter_mut().enumerate().for_each(|(i, s)| f(i, s));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, s)| f(i, s));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let seq = map_range(Execution::Sequential, 100, |i| i * i);
        let par = map_range(Execution::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);

        let mut a = vec![1u32; 50];
        let mut b = vec![1u32; 50];
        for_each_mut(Execution::Sequential, &mut a, |i, x| *x += i as u32);
        for_each_mut(Execution::Parallel, &mut b, |i, x| *x += i as u32);
        assert_eq!(a, b);
        assert_eq!(
            map_slice(Execution::Parallel, &a, |i, x| *x as usize + i),
            map_slice(Execution::Sequential, &a, |i, x| *x as usize + i)
        );
    }
}
