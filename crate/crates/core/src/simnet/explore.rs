//! Exhaustive enumeration of scheduler choices.
//!
//! Depth-first search over global states. Futures cannot be cloned, so a
//! state is reached by re-executing its decision prefix from a fresh world.
//! States are memoised by fingerprint together with the number of complete
//! schedules below them, so every interleaving is accounted for while each
//! distinct state is expanded once.

use std::collections::HashMap;
use std::future::Future;

use super::context::RankContext;
use super::sched::{Schedule, Simulator};
use super::world::DeadlockReport;
use super::{SimConfig, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Longest schedule (in steps) the search will follow.
    pub max_depth: usize,
    /// Distinct states after which the search gives up.
    pub max_states: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_depth: 10_000,
            max_states: 2_000_000,
        }
    }
}

/// Why an exploration stopped early. Each variant carries a replayable
/// schedule reaching the offending state.
#[derive(Debug, Clone, PartialEq)]
pub enum ExploreFailure {
    Deadlock {
        schedule: Schedule,
        report: DeadlockReport,
    },
    Failed {
        schedule: Schedule,
        rank: usize,
        error: SimError,
    },
    /// Final per-rank results differ from those of `reference`.
    Divergent {
        schedule: Schedule,
        reference: Schedule,
    },
    DepthBound {
        schedule: Schedule,
        bound: usize,
    },
    StateBudget {
        states: usize,
    },
}

impl ExploreFailure {
    pub fn schedule(&self) -> Option<&Schedule> {
        match self {
            ExploreFailure::Deadlock { schedule, .. }
            | ExploreFailure::Failed { schedule, .. }
            | ExploreFailure::Divergent { schedule, .. }
            | ExploreFailure::DepthBound { schedule, .. } => Some(schedule),
            ExploreFailure::StateBudget { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exploration<T> {
    /// Distinct global states expanded.
    pub states: usize,
    /// Distinct terminal states reached.
    pub terminal_states: usize,
    /// Number of complete schedules (saturating).
    pub schedules: u128,
    /// Per-rank results of the first completed schedule.
    pub results: Option<Vec<T>>,
    pub reference: Option<Schedule>,
    pub failure: Option<ExploreFailure>,
}

impl<T> Exploration<T> {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.results.is_some()
    }
}

struct Search<'a, T, F> {
    size: usize,
    sim_config: &'a SimConfig,
    config: &'a ExploreConfig,
    program: F,
    memo: HashMap<u128, u128>,
    terminal_states: usize,
    results: Option<Vec<T>>,
    reference: Option<Schedule>,
}

fn schedule_of(prefix: &[usize]) -> Schedule {
    Schedule {
        decisions: prefix.to_vec(),
        seed: None,
    }
}

impl<T, F, Fut> Search<'_, T, F>
where
    T: Clone + PartialEq,
    F: Fn(RankContext) -> Fut,
    Fut: Future<Output = Result<T, SimError>> + 'static,
{
    fn replay(&self, prefix: &[usize]) -> Result<Simulator<T>, SimError> {
        let mut sim = Simulator::new(self.size, self.sim_config, &self.program)?;
        for &r in prefix {
            sim.step(r)?;
        }
        Ok(sim)
    }

    fn visit(&mut self, mut sim: Simulator<T>, prefix: &mut Vec<usize>) -> Result<u128, ExploreFailure> {
        let key = sim.fingerprint();
        if let Some(&n) = self.memo.get(&key) {
            return Ok(n);
        }
        if self.memo.len() >= self.config.max_states {
            return Err(ExploreFailure::StateBudget {
                states: self.memo.len(),
            });
        }
        if let Some((rank, error)) = sim.failure().cloned() {
            return Err(ExploreFailure::Failed {
                schedule: schedule_of(prefix),
                rank,
                error,
            });
        }
        if sim.is_finished() {
            let results = sim.take_results().expect("finished");
            self.terminal_states += 1;
            match &self.results {
                None => {
                    self.results = Some(results);
                    self.reference = Some(schedule_of(prefix));
                }
                Some(first) if *first != results => {
                    return Err(ExploreFailure::Divergent {
                        schedule: schedule_of(prefix),
                        reference: self.reference.clone().unwrap_or_default(),
                    });
                }
                Some(_) => {}
            }
            self.memo.insert(key, 1);
            return Ok(1);
        }
        let runnable = sim.runnable();
        if runnable.is_empty() {
            return Err(ExploreFailure::Deadlock {
                schedule: schedule_of(prefix),
                report: sim.deadlock_report(),
            });
        }
        if prefix.len() >= self.config.max_depth {
            return Err(ExploreFailure::DepthBound {
                schedule: schedule_of(prefix),
                bound: self.config.max_depth,
            });
        }
        let mut total: u128 = 0;
        let mut parent = Some(sim);
        for (i, &r) in runnable.iter().enumerate() {
            // The last child reuses the parent's world; the others replay.
            let fail = |error| ExploreFailure::Failed {
                schedule: schedule_of(prefix),
                rank: r,
                error,
            };
            let mut child = if i + 1 == runnable.len() {
                parent.take().expect("parent world used once")
            } else {
                self.replay(prefix).map_err(fail)?
            };
            child.step(r).map_err(fail)?;
            prefix.push(r);
            let n = self.visit(child, prefix);
            prefix.pop();
            total = total.saturating_add(n?);
        }
        self.memo.insert(key, total);
        Ok(total)
    }
}

/// Explores every schedule of `size` ranks running `program`, checking that
/// each one terminates without deadlock or error and that all of them
/// produce the same per-rank results.
pub fn explore<T, F, Fut>(
    size: usize,
    sim_config: &SimConfig,
    config: &ExploreConfig,
    program: F,
) -> Result<Exploration<T>, SimError>
where
    T: Clone + PartialEq,
    F: Fn(RankContext) -> Fut,
    Fut: Future<Output = Result<T, SimError>> + 'static,
{
    let mut search = Search {
        size,
        sim_config,
        config,
        program,
        memo: HashMap::new(),
        terminal_states: 0,
        results: None,
        reference: None,
    };
    let root = search.replay(&[])?;
    let mut prefix = Vec::new();
    let outcome = search.visit(root, &mut prefix);
    let (schedules, failure) = match outcome {
        Ok(n) => (n, None),
        Err(f) => (0, Some(f)),
    };
    Ok(Exploration {
        states: search.memo.len(),
        terminal_states: search.terminal_states,
        schedules,
        results: search.results,
        reference: search.reference,
        failure,
    })
}
