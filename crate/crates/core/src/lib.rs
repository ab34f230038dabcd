//! Deterministic message-passing simulation and differential verification of
//! MPICH-style allreduce algorithms.
//!
//! - [`simnet`]: a cooperative, single-threaded simulated MPI world with
//!   FIFO tag matching, buffered and synchronous sends, nonblocking requests,
//!   deadlock reports and exhaustive schedule exploration.
//! - [`value`]: element buffers and the builtin reduction operators.
//! - [`collectives`]: the reduce-then-broadcast oracle, recursive doubling
//!   and reduce-scatter/allgather as rank programs.
//! - [`verify`]: the differential harness comparing algorithms to the oracle.

pub mod collectives;
pub mod simnet;
pub mod value;
pub mod verify;

pub use collectives::{AllreduceParams, RdTopology, ALLREDUCE_TAG};
pub use simnet::{RankContext, SendMode, SimConfig, SimError};
pub use value::{Buffer, Datatype, ReduceOp, Reduction, Scalar, SendBuf, ValueError};
pub use verify::{Algorithm, CaseSpec, Outcome, Placement, SweepGrid, VerificationReport};
