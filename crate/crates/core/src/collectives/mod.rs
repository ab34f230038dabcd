//! Allreduce algorithms written as rank programs over [`crate::simnet`].

mod oracle;
mod recursive_doubling;
mod reduce_scatter_allgather;

use std::ops::Range;

use crate::value::{Datatype, ReduceOp};

pub use oracle::allreduce_oracle;
pub use recursive_doubling::allreduce_recursive_doubling;
pub use reduce_scatter_allgather::allreduce_reduce_scatter_allgather;

/// Tag used by every point-to-point message of the allreduce algorithms.
pub const ALLREDUCE_TAG: u32 = 14;

/// `floor(log2(number))`, or `-1` when `number <= 0`.
pub fn log2floor(number: i64) -> i32 {
    let mut number = number;
    let mut p = 0;
    while number > 0 {
        number >>= 1;
        p += 1;
    }
    p - 1
}

/// Largest power of two not above `number`, or 0 when `number <= 0`.
pub fn pof2(number: i64) -> i64 {
    if number > 0 {
        1 << log2floor(number)
    } else {
        0
    }
}

/// How a non-power-of-two communicator is folded onto `pof2` participants.
///
/// The first `2 * rem` ranks pair up: each even rank hands its data to the
/// odd rank above it and sits out, so `newrank` is `None` for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RdTopology {
    pub comm_size: usize,
    pub pof2: usize,
    pub rem: usize,
    pub newrank: Vec<Option<usize>>,
}

impl RdTopology {
    pub fn new(comm_size: usize) -> RdTopology {
        assert!(comm_size >= 1, "communicator must have at least one rank");
        let pof2 = pof2(comm_size as i64) as usize;
        let rem = comm_size - pof2;
        let newrank = (0..comm_size).map(|rank| fold_rank(rank, rem)).collect();
        RdTopology {
            comm_size,
            pof2,
            rem,
            newrank,
        }
    }

    /// Real rank of participant `newrank`.
    pub fn real_rank(&self, newrank: usize) -> usize {
        unfold_rank(newrank, self.rem)
    }

    /// `newrank` with `-1` for folded-out ranks.
    pub fn newrank_table(&self) -> Vec<i64> {
        self.newrank
            .iter()
            .map(|n| n.map_or(-1, |v| v as i64))
            .collect()
    }
}

pub fn rd_topology(comm_size: usize) -> RdTopology {
    RdTopology::new(comm_size)
}

pub(crate) fn fold_rank(rank: usize, rem: usize) -> Option<usize> {
    if rank < 2 * rem {
        if rank % 2 == 0 {
            None
        } else {
            Some(rank / 2)
        }
    } else {
        Some(rank - rem)
    }
}

pub(crate) fn unfold_rank(newrank: usize, rem: usize) -> usize {
    if newrank < rem {
        newrank * 2 + 1
    } else {
        newrank + rem
    }
}

/// Splits `count` elements into `parts` contiguous chunks whose sizes differ
/// by at most one, the larger chunks first.
pub fn chunk_partition(count: usize, parts: usize) -> Vec<Range<usize>> {
    assert!(parts > 0, "cannot partition into zero chunks");
    let base = count / parts;
    let extra = count % parts;
    let mut start = 0;
    (0..parts)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Arguments shared by every rank of one allreduce call.
#[derive(Debug, Clone, PartialEq)]
pub struct AllreduceParams<R = ReduceOp> {
    pub count: usize,
    pub datatype: Datatype,
    pub op: R,
    pub tag: u32,
}

impl<R> AllreduceParams<R> {
    pub fn new(count: usize, datatype: Datatype, op: R) -> Self {
        AllreduceParams {
            count,
            datatype,
            op,
            tag: ALLREDUCE_TAG,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pof2_and_log2() {
        assert_eq!(pof2(8), 8);
        assert_eq!(pof2(6), 4);
        assert_eq!(log2floor(6), 2);
        assert_eq!(pof2(0), 0);
        assert_eq!(pof2(-3), 0);
        assert_eq!(pof2(1), 1);
        assert_eq!(log2floor(1), 0);
        assert_eq!(log2floor(0), -1);
    }

    #[test]
    fn topology_six() {
        let t = rd_topology(6);
        assert_eq!((t.pof2, t.rem), (4, 2));
        assert_eq!(t.newrank_table(), vec![-1, 0, -1, 1, 2, 3]);
        assert_eq!((0..4).map(|n| t.real_rank(n)).collect::<Vec<_>>(), vec![1, 3, 4, 5]);
    }

    #[test]
    fn topology_power_of_two_and_one() {
        let t = rd_topology(4);
        assert_eq!((t.pof2, t.rem), (4, 0));
        assert_eq!(t.newrank, (0..4).map(Some).collect::<Vec<_>>());
        let t = rd_topology(1);
        assert_eq!((t.pof2, t.rem), (1, 0));
        assert_eq!(t.newrank, vec![Some(0)]);
    }

    #[test]
    fn partition_front_loads_remainder() {
        assert_eq!(chunk_partition(10, 4), vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(chunk_partition(4, 4), vec![0..1, 1..2, 2..3, 3..4]);
        assert_eq!(chunk_partition(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
    }
}
