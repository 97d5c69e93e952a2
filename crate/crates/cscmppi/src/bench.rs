//! Parallel benchmarks over independent episodes.

use std::time::Instant;

use cscmppi_core::controller::ControllerKind;
use cscmppi_core::sim::{episode_seed, run_episode, summarize, BenchmarkSummary, Clock, EpisodeResult, Scenario, StepObserver};
use rayon::prelude::*;

/// Wall clock measured from its creation.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs episodes `seed_base + i` for `i < n_episodes` on the current rayon
/// pool. Results come back in episode order whatever the worker count.
///
/// `observer(i)` builds the step observer of episode `i`; the observers are
/// handed back alongside the results.
pub fn run_parallel<O, F>(
    scenario: &Scenario,
    kind: ControllerKind,
    n_episodes: usize,
    seed_base: u64,
    observer: F,
) -> cscmppi_core::Result<(BenchmarkSummary, Vec<EpisodeResult>, Vec<O>)>
where
    O: StepObserver + Send,
    F: Fn(usize) -> O + Sync,
{
    if n_episodes == 0 {
        return Err(cscmppi_core::Error::InvalidParameter {
            name: "n_episodes",
            reason: "must be at least 1",
        });
    }
    scenario.validate()?;
    let runs = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut obs = observer(i);
            run_episode(scenario, kind, episode_seed(seed_base, i), &mut StdClock::default(), &mut obs).map(|r| (r, obs))
        })
        .collect::<cscmppi_core::Result<Vec<_>>>()?;
    let (results, observers): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok((summarize(&results), results, observers))
}

/// Same as [`run_parallel`] on a dedicated pool of `workers` threads.
pub fn run_with_workers(
    scenario: &Scenario,
    kind: ControllerKind,
    n_episodes: usize,
    seed_base: u64,
    workers: usize,
) -> anyhow::Result<(BenchmarkSummary, Vec<EpisodeResult>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let (summary, results, _) = pool.install(|| run_parallel(scenario, kind, n_episodes, seed_base, |_| ()))?;
    Ok((summary, results))
}
