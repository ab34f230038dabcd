use std::cell::RefCell;
use std::collections::BTreeMap;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::context::RankContext;
use super::trace::TraceEvent;
use super::world::{DeadlockReport, UnreceivedMessage, World};
use super::{CommId, SimConfig, SimError, MAX_RANKS};

type RankFuture<T> = Pin<Box<dyn Future<Output = Result<T, SimError>>>>;

/// The sequence of ranks the scheduler picked, one per step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub decisions: Vec<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulePolicy {
    /// Always step the lowest-numbered runnable rank.
    LowestRank,
    /// Pick uniformly among runnable ranks with a seeded generator.
    Random(u64),
    /// Follow recorded decisions, then continue lowest-rank-first.
    Replay(Schedule),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Completed {
        results: Vec<T>,
        unreceived: Vec<UnreceivedMessage>,
    },
    Deadlock(DeadlockReport),
    Failed {
        rank: usize,
        error: SimError,
    },
    StepLimit {
        steps: u64,
    },
}

impl<T> Outcome<T> {
    pub fn completed(&self) -> Option<&[T]> {
        match self {
            Outcome::Completed { results, .. } => Some(results),
            _ => None,
        }
    }

    pub fn deadlock(&self) -> Option<&DeadlockReport> {
        match self {
            Outcome::Deadlock(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub outcome: Outcome<T>,
    pub trace: Vec<TraceEvent>,
    pub schedule: Schedule,
    pub steps: u64,
    pub sends_by_comm: BTreeMap<CommId, u64>,
    pub messages_received: u64,
}

impl<T> RunReport<T> {
    pub fn messages_sent(&self) -> u64 {
        self.sends_by_comm.values().sum()
    }
}

/// A world of ranks under explicit step-by-step control.
pub struct Simulator<T> {
    world: Rc<RefCell<World>>,
    tasks: Vec<Option<RankFuture<T>>>,
    results: Vec<Option<T>>,
    failure: Option<(usize, SimError)>,
    decisions: Vec<usize>,
}

impl<T> Simulator<T> {
    pub fn new<F, Fut>(size: usize, config: &SimConfig, mut program: F) -> Result<Self, SimError>
    where
        F: FnMut(RankContext) -> Fut,
        Fut: Future<Output = Result<T, SimError>> + 'static,
    {
        if size == 0 || size > MAX_RANKS {
            return Err(SimError::InvalidSize(size));
        }
        let world = Rc::new(RefCell::new(World::new(size, config.send_mode, config.trace)));
        let tasks = (0..size)
            .map(|r| {
                let ctx = RankContext::world_comm(Rc::clone(&world), r, size);
                Some(Box::pin(program(ctx)) as RankFuture<T>)
            })
            .collect();
        Ok(Simulator {
            world,
            tasks,
            results: (0..size).map(|_| None).collect(),
            failure: None,
            decisions: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.tasks.len()
    }

    /// Ranks that may be stepped now, in ascending order.
    pub fn runnable(&self) -> Vec<usize> {
        if self.failure.is_some() {
            return Vec::new();
        }
        let w = self.world.borrow();
        (0..self.tasks.len())
            .filter(|&r| self.tasks[r].is_some() && w.is_ready(r))
            .collect()
    }

    pub fn is_finished(&self) -> bool {
        self.failure.is_none() && self.tasks.iter().all(Option::is_none)
    }

    pub fn failure(&self) -> Option<&(usize, SimError)> {
        self.failure.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.decisions.len() as u64
    }

    pub fn decisions(&self) -> &[usize] {
        &self.decisions
    }

    /// Polls `rank` once: it runs until it posts its next operation,
    /// blocks, or returns.
    pub fn step(&mut self, rank: usize) -> Result<(), SimError> {
        let ready = self.failure.is_none()
            && rank < self.tasks.len()
            && self.tasks[rank].is_some()
            && self.world.borrow().is_ready(rank);
        if !ready {
            return Err(SimError::ScheduleDivergence {
                index: self.decisions.len(),
                rank,
            });
        }
        {
            let mut w = self.world.borrow_mut();
            w.step = self.decisions.len() as u64;
            w.ranks[rank].polls += 1;
        }
        self.decisions.push(rank);
        let mut cx = Context::from_waker(Waker::noop());
        let task = self.tasks[rank].as_mut().expect("checked above");
        if let Poll::Ready(res) = task.as_mut().poll(&mut cx) {
            self.tasks[rank] = None;
            self.world.borrow_mut().ranks[rank].done = true;
            match res {
                Ok(v) => self.results[rank] = Some(v),
                Err(e) => self.failure = Some((rank, e)),
            }
        }
        Ok(())
    }

    pub(crate) fn fingerprint(&self) -> u128 {
        self.world.borrow().fingerprint()
    }

    pub(crate) fn deadlock_report(&self) -> DeadlockReport {
        self.world.borrow().deadlock_report()
    }

    pub(crate) fn take_results(&mut self) -> Option<Vec<T>> {
        if !self.is_finished() {
            return None;
        }
        self.results.iter_mut().map(Option::take).collect()
    }

    /// Builds the report for the current state. A run that is neither
    /// finished, failed nor deadlocked is reported as hitting the step limit.
    pub fn finish(mut self, seed: Option<u64>) -> RunReport<T> {
        let outcome = if let Some((rank, error)) = self.failure.clone() {
            Outcome::Failed { rank, error }
        } else if self.is_finished() {
            Outcome::Completed {
                results: self.take_results().expect("finished"),
                unreceived: self.world.borrow().unreceived(),
            }
        } else if self.runnable().is_empty() {
            Outcome::Deadlock(self.deadlock_report())
        } else {
            Outcome::StepLimit {
                steps: self.steps(),
            }
        };
        let mut w = self.world.borrow_mut();
        RunReport {
            outcome,
            trace: w.trace.take().unwrap_or_default(),
            schedule: Schedule {
                decisions: std::mem::take(&mut self.decisions),
                seed,
            },
            steps: w.step,
            sends_by_comm: w.sends.clone(),
            messages_received: w.received,
        }
    }
}

/// Runs `size` copies of `program` to completion (or deadlock) under `policy`.
///
/// `Err` is returned only for an invalid world size or a replayed schedule
/// that picks a rank which is not runnable; everything a rank program does
/// wrong ends up in the report's [`Outcome`].
pub fn run<T, F, Fut>(
    size: usize,
    config: &SimConfig,
    policy: SchedulePolicy,
    program: F,
) -> Result<RunReport<T>, SimError>
where
    F: FnMut(RankContext) -> Fut,
    Fut: Future<Output = Result<T, SimError>> + 'static,
{
    let mut sim = Simulator::new(size, config, program)?;
    let (mut rng, seed) = match &policy {
        SchedulePolicy::Random(seed) => (Some(ChaCha8Rng::seed_from_u64(*seed)), Some(*seed)),
        SchedulePolicy::Replay(s) => (None, s.seed),
        SchedulePolicy::LowestRank => (None, None),
    };
    let replay: &[usize] = match &policy {
        SchedulePolicy::Replay(s) => &s.decisions,
        _ => &[],
    };
    while sim.steps() < config.max_steps {
        let runnable = sim.runnable();
        if runnable.is_empty() {
            break;
        }
        let i = sim.steps() as usize;
        let pick = if let Some(&r) = replay.get(i) {
            r
        } else if let Some(rng) = rng.as_mut() {
            runnable[rng.random_range(0..runnable.len())]
        } else {
            runnable[0]
        };
        sim.step(pick)?;
    }
    Ok(sim.finish(seed))
}
