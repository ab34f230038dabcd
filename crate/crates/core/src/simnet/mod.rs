//! Deterministic simulated message-passing runtime.
//!
//! Rank programs are `async` blocks polled cooperatively by a single-threaded
//! scheduler. One scheduler step polls one runnable rank until it posts its
//! next communication operation (or finishes). Messages are matched FIFO per
//! `(communicator, source, destination, tag)` channel.
//!
//! ```
//! use collsim_core::simnet::{run, SchedulePolicy, SimConfig};
//! use collsim_core::Buffer;
//!
//! let report = run(2, &SimConfig::default(), SchedulePolicy::LowestRank, |ctx| async move {
//!     let peer = 1 - ctx.rank();
//!     let got = ctx
//!         .sendrecv(&Buffer::Int64(vec![ctx.rank() as i64]), peer, 0, peer, 0)
//!         .await?;
//!     Ok(got)
//! })
//! .unwrap();
//! let results = report.outcome.completed().unwrap();
//! assert_eq!(results[0], Buffer::Int64(vec![1]));
//! ```

mod context;
mod explore;
mod sched;
mod trace;
mod world;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::ValueError;

pub use context::{RankContext, Request};
pub use explore::{explore, ExploreConfig, ExploreFailure, Exploration};
pub use sched::{run, Outcome, RunReport, Schedule, SchedulePolicy, Simulator};
pub use trace::{format_trace, parse_trace_line, TraceEvent, TraceKind};
pub use world::{BlockedRank, DeadlockReport, PendingOp, UnreceivedMessage};

/// Upper bound on the number of simulated ranks.
pub const MAX_RANKS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("rank {rank} is out of range for a communicator of size {size}")]
    InvalidRank { rank: usize, size: usize },
    #[error("invalid world size {0}")]
    InvalidSize(usize),
    #[error("rank {caller} waited on a request owned by rank {owner}")]
    ForeignRequest { owner: usize, caller: usize },
    #[error("message of {got} elements truncated into a {capacity}-element buffer")]
    Truncated { got: usize, capacity: usize },
    #[error("operator {0} is not commutative; this algorithm requires commutativity")]
    NonCommutative(String),
    #[error("schedule decision {index} picks rank {rank}, which is not runnable")]
    ScheduleDivergence { index: usize, rank: usize },
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// Message-matching scope. `Dup(k)` is the `k`-th duplicate of the world
/// communicator; `SelfOf(r)` is rank `r`'s private self-communicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommId {
    World,
    Dup(u32),
    SelfOf(usize),
}

impl fmt::Display for CommId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommId::World => f.write_str("world"),
            CommId::Dup(k) => write!(f, "dup{k}"),
            CommId::SelfOf(r) => write!(f, "self{r}"),
        }
    }
}

/// Point-to-point send semantics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SendMode {
    /// Unbounded buffering: a send completes as soon as it is posted.
    #[default]
    Buffered,
    /// Zero buffering: a send completes once a matching receive consumes it.
    Synchronous,
}

impl SendMode {
    pub fn short_name(self) -> &'static str {
        match self {
            SendMode::Buffered => "buffered",
            SendMode::Synchronous => "sync",
        }
    }
}

impl fmt::Display for SendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub send_mode: SendMode,
    pub trace: bool,
    /// Scheduler steps after which a run is abandoned.
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            send_mode: SendMode::Buffered,
            trace: false,
            max_steps: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn with_mode(mut self, mode: SendMode) -> Self {
        self.send_mode = mode;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }
}

/// Handle of an issued point-to-point request, unique per owning rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId {
    pub owner: usize,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestKind {
    Send,
    Recv,
}

/// A message in flight. `src` and `dst` are ranks of `comm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub src: usize,
    pub dst: usize,
    pub tag: u32,
    pub comm: CommId,
    pub payload: crate::value::Buffer,
}
