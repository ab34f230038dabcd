use std::ops::Range;

use super::oracle::check;
use super::{allreduce_recursive_doubling, chunk_partition, pof2, unfold_rank, AllreduceParams};
use crate::simnet::{RankContext, SimError};
use crate::value::{Buffer, Reduction, SendBuf};

/// Reduce-scatter followed by allgather (Rabenseifner's scheme).
///
/// Folding of non-power-of-two sizes is identical to
/// [`allreduce_recursive_doubling`]. Among the `pof2` participants the vector
/// is cut into `pof2` chunks by [`chunk_partition`]; participant `k` ends up
/// owning the fully reduced chunk `k`.
///
/// - Reduce-scatter by recursive halving: at step `s = 1, 2, ...` the partner
///   is `newrank ^ (pof2 >> s)`. Each rank keeps the half of its current
///   chunk window that contains its own chunk, sends the other half, and
///   reduces the partner's copy of the kept half into its own.
/// - Allgather by recursive doubling, partners in reverse order: each rank
///   sends the window it owns and receives the sibling window.
///
/// The chunk arithmetic is a reconstruction; when `count < pof2` some
/// chunks would be empty and the call delegates to recursive doubling.
/// Noncommutative operators are rejected because the halving order does not
/// combine ranks contiguously.
pub async fn allreduce_reduce_scatter_allgather<R: Reduction>(
    ctx: &RankContext,
    sendbuf: SendBuf<'_>,
    recvbuf: &mut Buffer,
    params: &AllreduceParams<R>,
) -> Result<(), SimError> {
    let rank = ctx.rank();
    let comm_size = ctx.size();
    let count = params.count;
    let op = &params.op;
    let tag = params.tag;

    let pof2 = pof2(comm_size as i64) as usize;
    if count < pof2 {
        return allreduce_recursive_doubling(ctx, sendbuf, recvbuf, params).await;
    }
    if !op.is_commutative() {
        return Err(SimError::NonCommutative(op.name()));
    }

    check(recvbuf, params)?;
    let mut tmp_buf = Buffer::zeroed(params.datatype, count);
    if let SendBuf::Buf(sendbuf) = sendbuf {
        check(sendbuf, params)?;
        ctx.local_copy(sendbuf, recvbuf)?;
    }

    let rem = comm_size - pof2;
    let newrank = if rank < 2 * rem {
        if rank % 2 == 0 {
            ctx.send(rank + 1, tag, recvbuf).await?;
            None
        } else {
            ctx.recv_into(&mut tmp_buf, rank - 1, tag).await?;
            ctx.reduce_local(&tmp_buf, recvbuf, op)?;
            Some(rank / 2)
        }
    } else {
        Some(rank - rem)
    };

    if let Some(newrank) = newrank {
        let chunks = chunk_partition(count, pof2);
        let span = |window: Range<usize>| -> Range<usize> {
            if window.is_empty() {
                return 0..0;
            }
            chunks[window.start].start..chunks[window.end - 1].end
        };

        // reduce-scatter: halve the chunk window [lo, hi) each step
        let (mut lo, mut hi) = (0, pof2);
        let mut dist = pof2 >> 1;
        while dist > 0 {
            let dst = unfold_rank(newrank ^ dist, rem);
            let mid = lo + (hi - lo) / 2;
            let (keep, give) = if newrank & dist == 0 {
                (lo..mid, mid..hi)
            } else {
                (mid..hi, lo..mid)
            };
            let send_range = span(give);
            let recv_range = span(keep.clone());

            let outgoing = recvbuf.slice(send_range)?;
            let incoming = ctx.sendrecv(&outgoing, dst, tag, dst, tag).await?;
            if incoming.len() != recv_range.len() {
                return Err(SimError::Truncated {
                    got: incoming.len(),
                    capacity: recv_range.len(),
                });
            }
            tmp_buf.write_at(recv_range.start, &incoming)?;

            let mut acc = recvbuf.slice(recv_range.clone())?;
            ctx.reduce_local(&tmp_buf.slice(recv_range.clone())?, &mut acc, op)?;
            recvbuf.write_at(recv_range.start, &acc)?;

            (lo, hi) = (keep.start, keep.end);
            dist >>= 1;
        }
        debug_assert_eq!((lo, hi), (newrank, newrank + 1));

        // allgather: double the owned window, partners in reverse order
        let mut dist = 1;
        while dist < pof2 {
            let dst = unfold_rank(newrank ^ dist, rem);
            let width = hi - lo;
            let theirs = if newrank & dist == 0 {
                hi..hi + width
            } else {
                lo - width..lo
            };
            let outgoing = recvbuf.slice(span(lo..hi))?;
            let recv_range = span(theirs.clone());
            let incoming = ctx.sendrecv(&outgoing, dst, tag, dst, tag).await?;
            if incoming.len() != recv_range.len() {
                return Err(SimError::Truncated {
                    got: incoming.len(),
                    capacity: recv_range.len(),
                });
            }
            recvbuf.write_at(recv_range.start, &incoming)?;

            (lo, hi) = (lo.min(theirs.start), hi.max(theirs.end));
            dist <<= 1;
        }
    }

    if rank < 2 * rem {
        if rank % 2 == 1 {
            ctx.send(rank - 1, tag, recvbuf).await?;
        } else {
            ctx.recv_into(recvbuf, rank + 1, tag).await?;
        }
    }
    Ok(())
}
