//! Shared simulator state: request table, per-channel queues and matching.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::trace::{TraceEvent, TraceKind};
use super::{CommId, RequestId, RequestKind, SendMode};
use crate::value::Buffer;

/// Channels are keyed by world ranks so that per-rank self communicators
/// never alias each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ChannelKey {
    comm: CommId,
    src: usize,
    dst: usize,
    tag: u32,
}

#[derive(Debug)]
struct InFlight {
    send: RequestId,
    payload: Buffer,
}

#[derive(Debug, Default)]
struct Channel {
    inflight: VecDeque<InFlight>,
    posted: VecDeque<RequestId>,
}

#[derive(Debug)]
pub(crate) struct RequestState {
    pub kind: RequestKind,
    pub complete: bool,
    pub payload: Option<Buffer>,
    pub comm: CommId,
    /// Peer as a rank of `comm`.
    pub peer: usize,
    pub peer_world: usize,
    pub tag: u32,
}

#[derive(Debug, Default)]
pub(crate) struct RankState {
    pub waiting: Vec<RequestId>,
    pub done: bool,
    pub next_seq: u32,
    pub next_dup: u32,
    pub polls: u32,
    /// Running digest of every payload this rank has received.
    observed: u64,
}

#[derive(Debug)]
pub(crate) struct World {
    pub mode: SendMode,
    pub ranks: Vec<RankState>,
    pub requests: BTreeMap<RequestId, RequestState>,
    channels: BTreeMap<ChannelKey, Channel>,
    pub trace: Option<Vec<TraceEvent>>,
    pub step: u64,
    pub sends: BTreeMap<CommId, u64>,
    pub received: u64,
}

/// A point-to-point operation a blocked rank is waiting on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingOp {
    pub kind: RequestKind,
    pub comm: CommId,
    pub peer: usize,
    pub peer_world: usize,
    pub tag: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedRank {
    pub rank: usize,
    pub waits_for: Vec<PendingOp>,
}

/// Every unfinished rank and what it is blocked on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockReport {
    pub blocked: Vec<BlockedRank>,
}

impl DeadlockReport {
    pub fn blocked_ranks(&self) -> Vec<usize> {
        self.blocked.iter().map(|b| b.rank).collect()
    }

    /// Wait-for edges `(waiter, awaited)` in world ranks.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.blocked
            .iter()
            .flat_map(|b| b.waits_for.iter().map(move |w| (b.rank, w.peer_world)))
            .collect()
    }
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock:")?;
        for b in &self.blocked {
            write!(f, " rank {} waits for", b.rank)?;
            for w in &b.waits_for {
                let verb = match w.kind {
                    RequestKind::Send => "send to",
                    RequestKind::Recv => "recv from",
                };
                write!(f, " [{verb} {} tag {} on {}]", w.peer_world, w.tag, w.comm)?;
            }
            write!(f, ";")?;
        }
        Ok(())
    }
}

/// A message still queued when every rank has terminated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnreceivedMessage {
    pub src: usize,
    pub dst: usize,
    pub tag: u32,
    pub comm: CommId,
    pub count: usize,
}

impl World {
    pub fn new(size: usize, mode: SendMode, trace: bool) -> Self {
        World {
            mode,
            ranks: (0..size).map(|_| RankState::default()).collect(),
            requests: BTreeMap::new(),
            channels: BTreeMap::new(),
            trace: trace.then(Vec::new),
            step: 0,
            sends: BTreeMap::new(),
            received: 0,
        }
    }

    fn alloc(&mut self, owner: usize) -> RequestId {
        let st = &mut self.ranks[owner];
        let id = RequestId {
            owner,
            seq: st.next_seq,
        };
        st.next_seq += 1;
        id
    }

    pub fn log(&mut self, rank: usize, kind: TraceKind, peer: Option<usize>, tag: Option<u32>, count: usize) {
        let step = self.step;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent {
                step,
                rank,
                kind,
                peer,
                tag,
                count,
            });
        }
    }

    /// Posts a send from world rank `src` to world rank `dst`.
    #[allow(clippy::too_many_arguments)]
    pub fn post_send(
        &mut self,
        comm: CommId,
        src: usize,
        dst: usize,
        dst_local: usize,
        tag: u32,
        payload: Buffer,
    ) -> RequestId {
        let id = self.alloc(src);
        *self.sends.entry(comm).or_default() += 1;
        self.requests.insert(
            id,
            RequestState {
                kind: RequestKind::Send,
                complete: self.mode == SendMode::Buffered,
                payload: None,
                comm,
                peer: dst_local,
                peer_world: dst,
                tag,
            },
        );
        let key = ChannelKey { comm, src, dst, tag };
        let ch = self.channels.entry(key).or_default();
        match ch.posted.pop_front() {
            Some(recv) => {
                self.deliver(recv, payload);
                self.complete(id);
            }
            None => ch.inflight.push_back(InFlight { send: id, payload }),
        }
        id
    }

    /// Posts a receive at world rank `dst` for messages from world rank `src`.
    pub fn post_recv(&mut self, comm: CommId, src: usize, src_local: usize, dst: usize, tag: u32) -> RequestId {
        let id = self.alloc(dst);
        self.requests.insert(
            id,
            RequestState {
                kind: RequestKind::Recv,
                complete: false,
                payload: None,
                comm,
                peer: src_local,
                peer_world: src,
                tag,
            },
        );
        let key = ChannelKey { comm, src, dst, tag };
        let ch = self.channels.entry(key).or_default();
        match ch.inflight.pop_front() {
            Some(msg) => {
                self.complete(msg.send);
                self.deliver(id, msg.payload);
            }
            None => ch.posted.push_back(id),
        }
        id
    }

    fn complete(&mut self, id: RequestId) {
        if let Some(req) = self.requests.get_mut(&id) {
            req.complete = true;
        }
    }

    fn deliver(&mut self, id: RequestId, payload: Buffer) {
        let mut h = DefaultHasher::new();
        let rank = &mut self.ranks[id.owner];
        rank.observed.hash(&mut h);
        id.seq.hash(&mut h);
        payload.hash(&mut h);
        rank.observed = h.finish();
        let req = self.requests.get_mut(&id).expect("delivering to a live request");
        req.payload = Some(payload);
        req.complete = true;
        self.received += 1;
    }

    pub fn is_complete(&self, id: &RequestId) -> bool {
        self.requests.get(id).is_none_or(|r| r.complete)
    }

    pub fn is_ready(&self, rank: usize) -> bool {
        let st = &self.ranks[rank];
        !st.done && st.waiting.iter().all(|id| self.is_complete(id))
    }

    /// Removes a completed request and hands back its payload (receives only).
    pub fn retire(&mut self, id: &RequestId) -> Option<Buffer> {
        self.requests.remove(id).and_then(|r| r.payload)
    }

    pub fn deadlock_report(&self) -> DeadlockReport {
        let blocked = self
            .ranks
            .iter()
            .enumerate()
            .filter(|(_, st)| !st.done)
            .map(|(rank, st)| BlockedRank {
                rank,
                waits_for: st
                    .waiting
                    .iter()
                    .filter_map(|id| self.requests.get(id).filter(|r| !r.complete))
                    .map(|r| PendingOp {
                        kind: r.kind,
                        comm: r.comm,
                        peer: r.peer,
                        peer_world: r.peer_world,
                        tag: r.tag,
                    })
                    .collect(),
            })
            .collect();
        DeadlockReport { blocked }
    }

    pub fn unreceived(&self) -> Vec<UnreceivedMessage> {
        self.channels
            .iter()
            .flat_map(|(k, ch)| {
                ch.inflight.iter().map(move |m| UnreceivedMessage {
                    src: k.src,
                    dst: k.dst,
                    tag: k.tag,
                    comm: k.comm,
                    count: m.payload.len(),
                })
            })
            .collect()
    }

    /// Digest of the global state, excluding the trace and step counter.
    ///
    /// Rank programs are deterministic in the values their operations
    /// return, so a rank's local state is fixed by how often it has been
    /// polled together with the payloads it has received.
    pub fn fingerprint(&self) -> u128 {
        let mut lo = DefaultHasher::new();
        let mut hi = DefaultHasher::new();
        0xa5a5_u16.hash(&mut hi);
        for h in [&mut lo, &mut hi] {
            for st in &self.ranks {
                (st.done, st.polls, st.observed, &st.waiting).hash(h);
            }
            for (id, r) in &self.requests {
                (id, r.kind, r.complete, r.comm, r.peer_world, r.tag, &r.payload).hash(h);
            }
            for (k, ch) in &self.channels {
                if ch.inflight.is_empty() && ch.posted.is_empty() {
                    continue;
                }
                k.hash(h);
                for m in &ch.inflight {
                    (m.send, &m.payload).hash(h);
                }
                ch.posted.hash(h);
            }
        }
        (u128::from(hi.finish()) << 64) | u128::from(lo.finish())
    }
}
