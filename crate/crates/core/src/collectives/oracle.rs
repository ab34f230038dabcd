use super::AllreduceParams;
use crate::simnet::{RankContext, SimError};
use crate::value::{Buffer, Reduction, ValueError};

/// Reference allreduce: rank 0 receives every contribution in ascending rank
/// order and left-folds it into its accumulator, then sends the result to
/// ranks `1..size` one by one.
///
/// Every rank returns `op(...op(op(x0, x1), x2)..., x_{P-1})` elementwise.
pub async fn allreduce_oracle<R: Reduction>(
    ctx: &RankContext,
    sendbuf: &Buffer,
    params: &AllreduceParams<R>,
) -> Result<Buffer, SimError> {
    check(sendbuf, params)?;
    let tag = params.tag;
    if ctx.rank() == 0 {
        let mut acc = sendbuf.clone();
        for src in 1..ctx.size() {
            let mut incoming = ctx.recv(src, tag).await?;
            check(&incoming, params)?;
            // incoming := acc op incoming, keeping lower ranks on the left
            ctx.reduce_local(&acc, &mut incoming, &params.op)?;
            acc = incoming;
        }
        for dst in 1..ctx.size() {
            ctx.send(dst, tag, &acc).await?;
        }
        Ok(acc)
    } else {
        ctx.send(0, tag, sendbuf).await?;
        let result = ctx.recv(0, tag).await?;
        check(&result, params)?;
        Ok(result)
    }
}

pub(crate) fn check<R>(buf: &Buffer, params: &AllreduceParams<R>) -> Result<(), ValueError> {
    if buf.datatype() != params.datatype {
        return Err(ValueError::DatatypeMismatch {
            expected: params.datatype,
            actual: buf.datatype(),
        });
    }
    if buf.len() != params.count {
        return Err(ValueError::CountMismatch {
            expected: params.count,
            actual: buf.len(),
        });
    }
    Ok(())
}
