use serde::{Deserialize, Serialize};

use crate::value::{Buffer, Datatype, ReduceOp, Scalar, ValueError};

/// How two result buffers are judged equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EqualityPolicy {
    /// Elementwise identity (bitwise for floats).
    Exact,
    /// Floats within the given ULP distance.
    Ulp(u64),
}

/// `ceil(log2(p))`, 0 for `p <= 1`.
pub fn ceil_log2(p: usize) -> u32 {
    if p <= 1 {
        0
    } else {
        usize::BITS - (p - 1).leading_zeros()
    }
}

/// Default tolerance for float sums and products over `p` ranks:
/// `4 * ceil(log2(p))` ULPs.
pub fn default_ulp_threshold(p: usize) -> u64 {
    4 * u64::from(ceil_log2(p))
}

/// Exact everywhere except float Sum/Prod, which reassociate.
pub fn policy_for(datatype: Datatype, op: ReduceOp, p: usize, threshold: Option<u64>) -> EqualityPolicy {
    match (datatype, op) {
        (Datatype::Float64, ReduceOp::Sum | ReduceOp::Prod) => {
            EqualityPolicy::Ulp(threshold.unwrap_or_else(|| default_ulp_threshold(p)))
        }
        _ => EqualityPolicy::Exact,
    }
}

fn ordered_bits(x: f64) -> i64 {
    let i = x.to_bits() as i64;
    if i < 0 {
        i64::MIN.wrapping_sub(i)
    } else {
        i
    }
}

/// Number of representable doubles between `a` and `b`. `0.0` and `-0.0`
/// are zero apart; anything involving NaN is `u64::MAX` apart.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a.is_nan() || b.is_nan() {
        return u64::MAX;
    }
    if a == b {
        return 0;
    }
    (i128::from(ordered_bits(a)) - i128::from(ordered_bits(b)))
        .unsigned_abs()
        .min(u128::from(u64::MAX)) as u64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UlpStats {
    pub max: u64,
    pub sum: f64,
    pub samples: u64,
}

impl UlpStats {
    pub fn record(&mut self, d: u64) {
        self.max = self.max.max(d);
        self.sum += d as f64;
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &UlpStats) {
        self.max = self.max.max(other.max);
        self.sum += other.sum;
        self.samples += other.samples;
    }

    pub fn mean(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.sum / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Match {
        ulp: Option<UlpStats>,
    },
    Mismatch {
        index: usize,
        expected: Scalar,
        actual: Scalar,
        ulp: Option<u64>,
    },
}

impl Comparison {
    pub fn is_match(&self) -> bool {
        matches!(self, Comparison::Match { .. })
    }
}

/// Compares `actual` against `expected` element by element, reporting the
/// first offending index.
pub fn compare_buffers(
    expected: &Buffer,
    actual: &Buffer,
    policy: EqualityPolicy,
) -> Result<Comparison, ValueError> {
    expected.check_compatible(actual)?;
    match (expected, actual, policy) {
        (Buffer::Float64(e), Buffer::Float64(a), EqualityPolicy::Ulp(threshold)) => {
            let mut stats = UlpStats::default();
            let mut first_bad = None;
            for (i, (&x, &y)) in e.iter().zip(a).enumerate() {
                let d = ulp_distance(x, y);
                stats.record(d);
                if d > threshold && first_bad.is_none() {
                    first_bad = Some((i, d));
                }
            }
            Ok(match first_bad {
                Some((index, d)) => Comparison::Mismatch {
                    index,
                    expected: Scalar::Float64(e[index]),
                    actual: Scalar::Float64(a[index]),
                    ulp: Some(d),
                },
                None => Comparison::Match { ulp: Some(stats) },
            })
        }
        (Buffer::Float64(e), Buffer::Float64(a), EqualityPolicy::Exact) => {
            Ok(match e.iter().zip(a).position(|(x, y)| x.to_bits() != y.to_bits()) {
                Some(index) => Comparison::Mismatch {
                    index,
                    expected: Scalar::Float64(e[index]),
                    actual: Scalar::Float64(a[index]),
                    ulp: Some(ulp_distance(e[index], a[index])),
                },
                None => Comparison::Match { ulp: None },
            })
        }
        _ => Ok(
            match expected.iter().zip(actual.iter()).enumerate().find(|(_, (x, y))| x != y) {
                Some((index, (x, y))) => Comparison::Mismatch {
                    index,
                    expected: x,
                    actual: y,
                    ulp: None,
                },
                None => Comparison::Match { ulp: None },
            },
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_and_mismatch() {
        let e = Buffer::Int64(vec![6, 10]);
        assert!(compare_buffers(&e, &e.clone(), EqualityPolicy::Exact).unwrap().is_match());
        assert_eq!(
            compare_buffers(&e, &Buffer::Int64(vec![6, 11]), EqualityPolicy::Exact).unwrap(),
            Comparison::Mismatch {
                index: 1,
                expected: Scalar::Int64(10),
                actual: Scalar::Int64(11),
                ulp: None
            }
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let e = Buffer::Int64(vec![6, 10]);
        assert!(compare_buffers(&e, &Buffer::Int64(vec![6]), EqualityPolicy::Exact).is_err());
        assert!(compare_buffers(&e, &Buffer::Int32(vec![6, 10]), EqualityPolicy::Exact).is_err());
    }

    #[test]
    fn reassociated_sum_within_threshold() {
        // (a + b) + c and a + (b + c) differ by one ULP for these operands.
        let (a, b, c) = (0.1f64, 0.2f64, 0.3f64);
        let left = (a + b) + c;
        let right = a + (b + c);
        assert_eq!(ulp_distance(left, right), 1);
        let cmp = compare_buffers(
            &Buffer::Float64(vec![left]),
            &Buffer::Float64(vec![right]),
            EqualityPolicy::Ulp(4),
        )
        .unwrap();
        match cmp {
            Comparison::Match { ulp: Some(stats) } => assert_eq!(stats.max, 1),
            other => panic!("expected match, got {other:?}"),
        }
        let strict = compare_buffers(
            &Buffer::Float64(vec![left]),
            &Buffer::Float64(vec![right]),
            EqualityPolicy::Ulp(0),
        )
        .unwrap();
        assert!(!strict.is_match());
    }

    #[test]
    fn ulp_distance_edges() {
        assert_eq!(ulp_distance(0.0, -0.0), 0);
        assert_eq!(ulp_distance(1.0, f64::from_bits(1.0f64.to_bits() + 3)), 3);
        assert_eq!(ulp_distance(-f64::MIN_POSITIVE, f64::MIN_POSITIVE), 2 * f64::MIN_POSITIVE.to_bits());
        assert_eq!(ulp_distance(f64::NAN, 1.0), u64::MAX);
    }

    #[test]
    fn thresholds() {
        assert_eq!(default_ulp_threshold(1), 0);
        assert_eq!(default_ulp_threshold(2), 4);
        assert_eq!(default_ulp_threshold(4), 8);
        assert_eq!(default_ulp_threshold(5), 12);
        assert_eq!(default_ulp_threshold(10), 16);
        assert_eq!(policy_for(Datatype::Float64, ReduceOp::Max, 8, None), EqualityPolicy::Exact);
        assert_eq!(policy_for(Datatype::Int64, ReduceOp::Sum, 8, None), EqualityPolicy::Exact);
        assert_eq!(policy_for(Datatype::Float64, ReduceOp::Prod, 8, Some(2)), EqualityPolicy::Ulp(2));
    }
}
