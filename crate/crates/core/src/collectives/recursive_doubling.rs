use super::oracle::check;
use super::{pof2, AllreduceParams};
use crate::simnet::{RankContext, SimError};
use crate::value::{true_extent, type_size, Buffer, Reduction, SendBuf};

/// Recursive-doubling allreduce, a statement-by-statement port of MPICH's
/// `MPIR_Allreduce_intra_recursive_doubling`.
///
/// On return `recvbuf` holds the reduction over all ranks. With
/// [`SendBuf::InPlace`] the local contribution is read from `recvbuf`.
///
/// Non-power-of-two sizes are handled by folding: among the first
/// `2 * rem` ranks each even rank ships its vector to the odd rank above it
/// and waits; the remaining `pof2` ranks run `log2(pof2)` rounds of pairwise
/// full-vector exchange with partner `newrank ^ mask`; finally the odd ranks
/// hand the result back to their even neighbours.
pub async fn allreduce_recursive_doubling<R: Reduction>(
    ctx: &RankContext,
    sendbuf: SendBuf<'_>,
    recvbuf: &mut Buffer,
    params: &AllreduceParams<R>,
) -> Result<(), SimError> {
    let rank = ctx.rank();
    let comm_size = ctx.size();
    let count = params.count;
    let datatype = params.datatype;
    let op = &params.op;
    let tag = params.tag;

    check(recvbuf, params)?;
    let is_commutative = op.is_commutative();

    // need to allocate temporary buffer to store incoming data
    let (true_lb, true_extent) = true_extent(datatype);
    let extent = type_size(datatype);
    let tmp_bytes = count * extent.max(true_extent);
    // the lower bound is always zero, so there is nothing to shift by
    debug_assert_eq!(true_lb, 0);
    let mut tmp_buf = Buffer::zeroed(datatype, tmp_bytes / extent);

    // copy local data into recvbuf
    if let SendBuf::Buf(sendbuf) = sendbuf {
        check(sendbuf, params)?;
        ctx.local_copy(sendbuf, recvbuf)?;
    }

    // get nearest power-of-two less than or equal to comm_size
    let pof2 = pof2(comm_size as i64) as usize;
    let rem = comm_size - pof2;

    // In the non-power-of-two case, all even-numbered processes of
    // rank < 2*rem send their data to (rank+1). These even-numbered
    // processes no longer participate in the algorithm until the very end.
    // The remaining processes form a nice power-of-two.
    let newrank = if rank < 2 * rem {
        if rank % 2 == 0 {
            ctx.send(rank + 1, tag, recvbuf).await?;
            // this process does not participate in recursive doubling
            None
        } else {
            ctx.recv_into(&mut tmp_buf, rank - 1, tag).await?;
            // the ordering is right, so commutativity does not matter here
            ctx.reduce_local(&tmp_buf, recvbuf, op)?;
            Some(rank / 2)
        }
    } else {
        Some(rank - rem)
    };

    if let Some(newrank) = newrank {
        let mut mask = 0x1;
        while mask < pof2 {
            let newdst = newrank ^ mask;
            // find real rank of dest
            let dst = if newdst < rem { newdst * 2 + 1 } else { newdst + rem };

            // Send the most current data, which is in recvbuf. Recv into tmp_buf
            ctx.sendrecv_into(recvbuf, dst, tag, &mut tmp_buf, dst, tag)
                .await?;

            // tmp_buf contains data received in this step.
            // recvbuf contains data accumulated so far
            if is_commutative || dst < rank {
                // op is commutative OR the order is already right
                ctx.reduce_local(&tmp_buf, recvbuf, op)?;
            } else {
                // op is noncommutative and the order is not right
                ctx.reduce_local(recvbuf, &mut tmp_buf, op)?;
                // copy result back into recvbuf
                ctx.local_copy(&tmp_buf, recvbuf)?;
            }
            mask <<= 1;
        }
    }

    // In the non-power-of-two case, all odd-numbered processes of
    // rank < 2*rem send the result to (rank-1), the ranks who didn't
    // participate above.
    if rank < 2 * rem {
        if rank % 2 == 1 {
            ctx.send(rank - 1, tag, recvbuf).await?;
        } else {
            ctx.recv_into(recvbuf, rank + 1, tag).await?;
        }
    }
    Ok(())
}
