//! Running many independent scenarios. Each run owns its state; results are
//! collected in input order once all runs finish.

use crate::sim::{run_partial, RunOutcome, ScenarioSpec};

/// Runs every spec, in parallel when the `parallel` feature is enabled.
pub fn run_batch(specs: &[ScenarioSpec]) -> Vec<RunOutcome> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(specs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(specs)
    }
}

pub fn run_batch_sequential(specs: &[ScenarioSpec]) -> Vec<RunOutcome> {
    specs.iter().map(run_partial).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(specs: &[ScenarioSpec]) -> Vec<RunOutcome> {
    use rayon::prelude::*;
    specs.par_iter().map(run_partial).collect()
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is enabled.
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
