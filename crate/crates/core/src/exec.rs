//! Data-parallel mapping over independent work items.
//!
//! Every parallel loop in the crate goes through [`map_indexed`] so that the
//! `parallel` feature can be switched off without touching call sites. Work
//! items are identified by index and results are always returned in index
//! order, which keeps downstream aggregation independent of scheduling.

use serde::{Deserialize, Serialize};

/// How independent work items (bootstrap draws, replications, grid points)
/// are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    /// Use the rayon pool when the `parallel` feature is enabled, otherwise
    /// run sequentially.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this build can actually run work items concurrently.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub(crate) fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Execution::Parallel {
            use rayon::prelude::*;
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..count).map(f).collect()
}

pub(crate) fn try_map_indexed<T, E, F>(exec: Execution, count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, count, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_index_order() {
        for exec in [Execution::Parallel, Execution::Sequential] {
            let out = map_indexed(exec, 100, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_by_index_is_reported() {
        let out: Result<Vec<usize>, usize> =
            try_map_indexed(
                Execution::Parallel,
                10,
                |i| if i >= 3 { Err(i) } else { Ok(i) },
            );
        assert_eq!(out, Err(3));
    }
}
