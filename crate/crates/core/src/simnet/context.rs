use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use super::trace::TraceKind;
use super::world::World;
use super::{CommId, RequestId, RequestKind, SimError};
use crate::value::{self, Buffer, Reduction, ValueError};

/// A rank's handle into one communicator of a simulated world.
///
/// Cloning is cheap; every clone talks to the same world. Rank and size are
/// relative to the communicator.
#[derive(Clone)]
pub struct RankContext {
    world: Rc<RefCell<World>>,
    comm: CommId,
    rank: usize,
    size: usize,
    world_rank: usize,
    /// `Some(r)` for a single-member communicator containing world rank `r`.
    solo: Option<usize>,
}

/// A pending nonblocking operation. Consumed by [`RankContext::waitall`].
#[derive(Debug)]
pub struct Request {
    id: RequestId,
    kind: RequestKind,
    peer: usize,
    tag: u32,
}

impl Request {
    pub fn id(&self) -> RequestId {
        self.id
    }

    pub fn kind(&self) -> RequestKind {
        self.kind
    }
}

impl std::fmt::Debug for RankContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RankContext")
            .field("comm", &self.comm)
            .field("rank", &self.rank)
            .field("size", &self.size)
            .finish()
    }
}

impl RankContext {
    pub(crate) fn world_comm(world: Rc<RefCell<World>>, rank: usize, size: usize) -> Self {
        RankContext {
            world,
            comm: CommId::World,
            rank,
            size,
            world_rank: rank,
            solo: None,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn comm(&self) -> CommId {
        self.comm
    }

    /// A fresh communicator over the same group with separate matching.
    /// Collective in spirit: ranks that dup in the same order agree on ids.
    pub fn dup(&self) -> RankContext {
        let k = {
            let mut w = self.world.borrow_mut();
            let st = &mut w.ranks[self.world_rank];
            st.next_dup += 1;
            st.next_dup
        };
        RankContext {
            comm: CommId::Dup(k),
            ..self.clone()
        }
    }

    /// This rank alone, as rank 0 of a size-1 communicator.
    pub fn self_comm(&self) -> RankContext {
        RankContext {
            comm: CommId::SelfOf(self.world_rank),
            rank: 0,
            size: 1,
            solo: Some(self.world_rank),
            ..self.clone()
        }
    }

    fn to_world(&self, rank: usize) -> Result<usize, SimError> {
        if rank >= self.size {
            return Err(SimError::InvalidRank {
                rank,
                size: self.size,
            });
        }
        Ok(self.solo.unwrap_or(rank))
    }

    fn log(&self, kind: TraceKind, peer: Option<usize>, tag: Option<u32>, count: usize) {
        self.world
            .borrow_mut()
            .log(self.world_rank, kind, peer, tag, count);
    }

    fn post_send(&self, dst: usize, tag: u32, buf: &Buffer) -> Result<RequestId, SimError> {
        let dst_world = self.to_world(dst)?;
        Ok(self
            .world
            .borrow_mut()
            .post_send(self.comm, self.world_rank, dst_world, dst, tag, buf.clone()))
    }

    fn post_recv(&self, src: usize, tag: u32) -> Result<RequestId, SimError> {
        let src_world = self.to_world(src)?;
        Ok(self
            .world
            .borrow_mut()
            .post_recv(self.comm, src_world, src, self.world_rank, tag))
    }

    fn wait(&self, reqs: Vec<RequestId>) -> Wait {
        Wait {
            world: Rc::clone(&self.world),
            rank: self.world_rank,
            reqs,
            armed: false,
        }
    }

    fn retire(&self, id: &RequestId) -> Option<Buffer> {
        self.world.borrow_mut().retire(id)
    }

    /// Blocking send; returns once the send request completes under the
    /// world's send mode.
    pub async fn send(&self, dst: usize, tag: u32, buf: &Buffer) -> Result<(), SimError> {
        let id = self.post_send(dst, tag, buf)?;
        self.log(TraceKind::Send, Some(dst), Some(tag), buf.len());
        self.wait(vec![id]).await;
        self.retire(&id);
        Ok(())
    }

    /// Blocking receive of the oldest matching message.
    pub async fn recv(&self, src: usize, tag: u32) -> Result<Buffer, SimError> {
        let id = self.post_recv(src, tag)?;
        self.wait(vec![id]).await;
        let payload = self.retire(&id).expect("completed receive carries a payload");
        self.log(TraceKind::Recv, Some(src), Some(tag), payload.len());
        Ok(payload)
    }

    /// Receives into the front of `buf`.
    pub async fn recv_into(&self, buf: &mut Buffer, src: usize, tag: u32) -> Result<(), SimError> {
        let payload = self.recv(src, tag).await?;
        store(buf, &payload)
    }

    /// Posts a send and a receive together and waits for both, so two ranks
    /// exchanging with each other always make progress.
    pub async fn sendrecv(
        &self,
        sbuf: &Buffer,
        dst: usize,
        stag: u32,
        src: usize,
        rtag: u32,
    ) -> Result<Buffer, SimError> {
        self.to_world(src)?;
        let sid = self.post_send(dst, stag, sbuf)?;
        let rid = self.post_recv(src, rtag)?;
        self.log(TraceKind::SendrecvPost, Some(dst), Some(stag), sbuf.len());
        self.wait(vec![sid, rid]).await;
        self.retire(&sid);
        let payload = self.retire(&rid).expect("completed receive carries a payload");
        self.log(TraceKind::Complete, Some(src), Some(rtag), payload.len());
        Ok(payload)
    }

    #[allow(clippy::too_many_arguments)]
    pub async fn sendrecv_into(
        &self,
        sbuf: &Buffer,
        dst: usize,
        stag: u32,
        rbuf: &mut Buffer,
        src: usize,
        rtag: u32,
    ) -> Result<(), SimError> {
        let payload = self.sendrecv(sbuf, dst, stag, src, rtag).await?;
        store(rbuf, &payload)
    }

    pub fn isend(&self, dst: usize, tag: u32, buf: &Buffer) -> Result<Request, SimError> {
        let id = self.post_send(dst, tag, buf)?;
        self.log(TraceKind::Send, Some(dst), Some(tag), buf.len());
        Ok(Request {
            id,
            kind: RequestKind::Send,
            peer: dst,
            tag,
        })
    }

    pub fn irecv(&self, src: usize, tag: u32) -> Result<Request, SimError> {
        let id = self.post_recv(src, tag)?;
        Ok(Request {
            id,
            kind: RequestKind::Recv,
            peer: src,
            tag,
        })
    }

    /// Waits for every request; the result holds, per request and in order,
    /// the received payload (`None` for sends).
    pub async fn waitall(&self, reqs: Vec<Request>) -> Result<Vec<Option<Buffer>>, SimError> {
        if let Some(foreign) = reqs.iter().find(|r| r.id.owner != self.world_rank) {
            return Err(SimError::ForeignRequest {
                owner: foreign.id.owner,
                caller: self.world_rank,
            });
        }
        if reqs.is_empty() {
            return Ok(Vec::new());
        }
        self.wait(reqs.iter().map(|r| r.id).collect()).await;
        Ok(reqs
            .iter()
            .map(|r| {
                let payload = self.retire(&r.id);
                let count = payload.as_ref().map_or(0, Buffer::len);
                self.log(TraceKind::Complete, Some(r.peer), Some(r.tag), count);
                payload
            })
            .collect())
    }

    /// Gives other ranks a chance to run.
    pub async fn yield_now(&self) {
        self.wait(Vec::new()).await
    }

    /// Traced `inoutbuf[i] := op(inbuf[i], inoutbuf[i])`.
    pub fn reduce_local<R: Reduction + ?Sized>(
        &self,
        inbuf: &Buffer,
        inoutbuf: &mut Buffer,
        op: &R,
    ) -> Result<(), SimError> {
        value::reduce_local(inbuf, inoutbuf, op)?;
        self.log(TraceKind::ReduceLocal, None, None, inbuf.len());
        Ok(())
    }

    /// Traced direct copy; no message is involved.
    pub fn local_copy(&self, src: &Buffer, dst: &mut Buffer) -> Result<(), SimError> {
        value::local_copy(src, dst)?;
        self.log(TraceKind::Copy, None, None, src.len());
        Ok(())
    }
}

fn store(buf: &mut Buffer, payload: &Buffer) -> Result<(), SimError> {
    if payload.datatype() != buf.datatype() {
        return Err(ValueError::DatatypeMismatch {
            expected: buf.datatype(),
            actual: payload.datatype(),
        }
        .into());
    }
    if payload.len() > buf.len() {
        return Err(SimError::Truncated {
            got: payload.len(),
            capacity: buf.len(),
        });
    }
    buf.write_at(0, payload)?;
    Ok(())
}

/// Suspends the rank once, then stays pending until every request is done.
/// The scheduler only re-polls a rank whose requests have all completed.
struct Wait {
    world: Rc<RefCell<World>>,
    rank: usize,
    reqs: Vec<RequestId>,
    armed: bool,
}

impl Future for Wait {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let mut w = self.world.borrow_mut();
        if !self.armed {
            w.ranks[self.rank].waiting = self.reqs.clone();
            drop(w);
            self.armed = true;
            return Poll::Pending;
        }
        if self.reqs.iter().all(|id| w.is_complete(id)) {
            w.ranks[self.rank].waiting.clear();
            Poll::Ready(())
        } else {
            Poll::Pending
        }
    }
}
