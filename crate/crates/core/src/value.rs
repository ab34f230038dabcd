//! Arithmetic domains, builtin reduction operators and element buffers.
//!
//! A [`Buffer`] is a homogeneous, fixed-length sequence of scalars in one of
//! the supported [`Datatype`]s. Reductions go through the [`Reduction`] trait
//! so that the collectives can be driven by the builtin [`ReduceOp`]s as well
//! as by test operators that are not commutative.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Range;
use std::str::FromStr;

use num::{BigInt, BigRational, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal per-element extent reported for [`Datatype::ExactRational`].
pub const RATIONAL_NOMINAL_EXTENT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("element count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("datatype mismatch: expected {expected}, got {actual}")]
    DatatypeMismatch { expected: Datatype, actual: Datatype },
    #[error("range {start}..{end} out of bounds for buffer of {len} elements")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("operator {op} is not defined on {datatype}")]
    Unsupported { op: String, datatype: Datatype },
    #[error("cannot parse {input:?} as {datatype}")]
    Parse { input: String, datatype: Datatype },
    #[error("unknown {what} {input:?}")]
    Unknown { what: &'static str, input: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Datatype {
    #[serde(rename = "i32")]
    Int32,
    #[serde(rename = "i64")]
    Int64,
    #[serde(rename = "f64")]
    Float64,
    #[serde(rename = "rational")]
    ExactRational,
}

impl Datatype {
    pub const ALL: [Datatype; 4] = [
        Datatype::Int32,
        Datatype::Int64,
        Datatype::Float64,
        Datatype::ExactRational,
    ];

    /// Bytes per element. Size and extent coincide for the contiguous
    /// builtin types modelled here.
    pub fn extent(self) -> usize {
        match self {
            Datatype::Int32 => 4,
            Datatype::Int64 | Datatype::Float64 => 8,
            Datatype::ExactRational => RATIONAL_NOMINAL_EXTENT,
        }
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, Datatype::Float64)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Datatype::Int32 => "i32",
            Datatype::Int64 => "i64",
            Datatype::Float64 => "f64",
            Datatype::ExactRational => "rational",
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Datatype {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i32" | "int32" | "int" => Ok(Datatype::Int32),
            "i64" | "int64" | "long" => Ok(Datatype::Int64),
            "f64" | "float64" | "double" => Ok(Datatype::Float64),
            "rational" | "q" | "exactrational" | "exact" => Ok(Datatype::ExactRational),
            _ => Err(ValueError::Unknown {
                what: "datatype",
                input: s.to_string(),
            }),
        }
    }
}

/// Element size of `dt` in bytes.
pub fn type_size(dt: Datatype) -> usize {
    dt.extent()
}

/// `(lower_bound, extent)`; the lower bound is always zero.
pub fn true_extent(dt: Datatype) -> (usize, usize) {
    (0, dt.extent())
}

/// A single element value.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Int32(i32),
    Int64(i64),
    Float64(f64),
    Rational(BigRational),
}

impl Scalar {
    pub fn datatype(&self) -> Datatype {
        match self {
            Scalar::Int32(_) => Datatype::Int32,
            Scalar::Int64(_) => Datatype::Int64,
            Scalar::Float64(_) => Datatype::Float64,
            Scalar::Rational(_) => Datatype::ExactRational,
        }
    }

    /// Converts a small integer into `dt`, wrapping for `Int32`.
    pub fn from_i64(dt: Datatype, v: i64) -> Scalar {
        match dt {
            Datatype::Int32 => Scalar::Int32(v as i32),
            Datatype::Int64 => Scalar::Int64(v),
            Datatype::Float64 => Scalar::Float64(v as f64),
            Datatype::ExactRational => Scalar::Rational(BigRational::from_integer(BigInt::from(v))),
        }
    }

    pub fn parse(dt: Datatype, s: &str) -> Result<Scalar, ValueError> {
        let err = || ValueError::Parse {
            input: s.to_string(),
            datatype: dt,
        };
        let s = s.trim();
        Ok(match dt {
            Datatype::Int32 => Scalar::Int32(s.parse().map_err(|_| err())?),
            Datatype::Int64 => Scalar::Int64(s.parse().map_err(|_| err())?),
            Datatype::Float64 => Scalar::Float64(s.parse().map_err(|_| err())?),
            Datatype::ExactRational => {
                let q: BigRational = s.parse().map_err(|_| err())?;
                Scalar::Rational(q)
            }
        })
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int32(v) => write!(f, "{v}"),
            Scalar::Int64(v) => write!(f, "{v}"),
            // `{:?}` prints the shortest representation that round-trips.
            Scalar::Float64(v) => write!(f, "{v:?}"),
            Scalar::Rational(v) => write!(f, "{v}"),
        }
    }
}

/// Homogeneous element sequence; the variant is the datatype.
#[derive(Debug, Clone, PartialEq)]
pub enum Buffer {
    Int32(Vec<i32>),
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Rational(Vec<BigRational>),
}

impl Buffer {
    /// A buffer of `count` zeros.
    pub fn zeroed(dt: Datatype, count: usize) -> Buffer {
        match dt {
            Datatype::Int32 => Buffer::Int32(vec![0; count]),
            Datatype::Int64 => Buffer::Int64(vec![0; count]),
            Datatype::Float64 => Buffer::Float64(vec![0.0; count]),
            Datatype::ExactRational => Buffer::Rational(vec![BigRational::zero(); count]),
        }
    }

    pub fn from_i64s(dt: Datatype, values: &[i64]) -> Buffer {
        Buffer::from_scalars(dt, values.iter().map(|&v| Scalar::from_i64(dt, v)))
            .expect("from_i64 always yields the requested datatype")
    }

    pub fn from_scalars<I>(dt: Datatype, values: I) -> Result<Buffer, ValueError>
    where
        I: IntoIterator<Item = Scalar>,
    {
        let mut buf = Buffer::zeroed(dt, 0);
        for v in values {
            buf.push(v)?;
        }
        Ok(buf)
    }

    pub fn parse(dt: Datatype, values: &[String]) -> Result<Buffer, ValueError> {
        let scalars = values
            .iter()
            .map(|s| Scalar::parse(dt, s))
            .collect::<Result<Vec<_>, _>>()?;
        Buffer::from_scalars(dt, scalars)
    }

    pub fn datatype(&self) -> Datatype {
        match self {
            Buffer::Int32(_) => Datatype::Int32,
            Buffer::Int64(_) => Datatype::Int64,
            Buffer::Float64(_) => Datatype::Float64,
            Buffer::Rational(_) => Datatype::ExactRational,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::Int32(v) => v.len(),
            Buffer::Int64(v) => v.len(),
            Buffer::Float64(v) => v.len(),
            Buffer::Rational(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<Scalar> {
        match self {
            Buffer::Int32(v) => v.get(i).map(|&x| Scalar::Int32(x)),
            Buffer::Int64(v) => v.get(i).map(|&x| Scalar::Int64(x)),
            Buffer::Float64(v) => v.get(i).map(|&x| Scalar::Float64(x)),
            Buffer::Rational(v) => v.get(i).map(|x| Scalar::Rational(x.clone())),
        }
    }

    pub fn set(&mut self, i: usize, value: Scalar) -> Result<(), ValueError> {
        let len = self.len();
        if i >= len {
            return Err(ValueError::OutOfBounds {
                start: i,
                end: i + 1,
                len,
            });
        }
        match (self, value) {
            (Buffer::Int32(v), Scalar::Int32(x)) => v[i] = x,
            (Buffer::Int64(v), Scalar::Int64(x)) => v[i] = x,
            (Buffer::Float64(v), Scalar::Float64(x)) => v[i] = x,
            (Buffer::Rational(v), Scalar::Rational(x)) => v[i] = x,
            (buf, value) => {
                return Err(ValueError::DatatypeMismatch {
                    expected: buf.datatype(),
                    actual: value.datatype(),
                })
            }
        }
        Ok(())
    }

    pub fn push(&mut self, value: Scalar) -> Result<(), ValueError> {
        match (self, value) {
            (Buffer::Int32(v), Scalar::Int32(x)) => v.push(x),
            (Buffer::Int64(v), Scalar::Int64(x)) => v.push(x),
            (Buffer::Float64(v), Scalar::Float64(x)) => v.push(x),
            (Buffer::Rational(v), Scalar::Rational(x)) => v.push(x),
            (buf, value) => {
                return Err(ValueError::DatatypeMismatch {
                    expected: buf.datatype(),
                    actual: value.datatype(),
                })
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = Scalar> + '_ {
        (0..self.len()).map(move |i| self.get(i).expect("index in range"))
    }

    /// Copies out the elements in `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Buffer, ValueError> {
        self.check_range(&range)?;
        Ok(match self {
            Buffer::Int32(v) => Buffer::Int32(v[range].to_vec()),
            Buffer::Int64(v) => Buffer::Int64(v[range].to_vec()),
            Buffer::Float64(v) => Buffer::Float64(v[range].to_vec()),
            Buffer::Rational(v) => Buffer::Rational(v[range].to_vec()),
        })
    }

    /// Overwrites `src.len()` elements starting at `offset`.
    pub fn write_at(&mut self, offset: usize, src: &Buffer) -> Result<(), ValueError> {
        let range = offset..offset + src.len();
        self.check_range(&range)?;
        match (self, src) {
            (Buffer::Int32(d), Buffer::Int32(s)) => d[range].copy_from_slice(s),
            (Buffer::Int64(d), Buffer::Int64(s)) => d[range].copy_from_slice(s),
            (Buffer::Float64(d), Buffer::Float64(s)) => d[range].copy_from_slice(s),
            (Buffer::Rational(d), Buffer::Rational(s)) => d[range].clone_from_slice(s),
            (d, s) => {
                return Err(ValueError::DatatypeMismatch {
                    expected: d.datatype(),
                    actual: s.datatype(),
                })
            }
        }
        Ok(())
    }

    /// Elementwise bit-level equality (distinguishes `-0.0` from `0.0`).
    pub fn bitwise_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::Float64(a), Buffer::Float64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => self == other,
        }
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.iter().map(|s| s.to_string()).collect()
    }

    fn check_range(&self, range: &Range<usize>) -> Result<(), ValueError> {
        let len = self.len();
        if range.start > range.end || range.end > len {
            return Err(ValueError::OutOfBounds {
                start: range.start,
                end: range.end,
                len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_compatible(&self, other: &Buffer) -> Result<(), ValueError> {
        if self.datatype() != other.datatype() {
            return Err(ValueError::DatatypeMismatch {
                expected: self.datatype(),
                actual: other.datatype(),
            });
        }
        if self.len() != other.len() {
            return Err(ValueError::CountMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }
}

impl Hash for Buffer {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.datatype().hash(state);
        match self {
            Buffer::Int32(v) => v.hash(state),
            Buffer::Int64(v) => v.hash(state),
            Buffer::Float64(v) => {
                v.len().hash(state);
                for x in v {
                    x.to_bits().hash(state);
                }
            }
            Buffer::Rational(v) => v.hash(state),
        }
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.to_strings().join(", "))
    }
}

/// The send-side argument of an allreduce: either a distinct input buffer or
/// the in-place marker, meaning the contribution is already in the receive
/// buffer.
#[derive(Debug, Clone, Copy)]
pub enum SendBuf<'a> {
    InPlace,
    Buf(&'a Buffer),
}

/// An elementwise reduction operator.
pub trait Reduction: fmt::Debug {
    fn is_commutative(&self) -> bool;

    fn name(&self) -> String;

    /// `inoutbuf[i] = op(inbuf[i], inoutbuf[i])`, `inbuf` as the left operand.
    /// Callers have already checked that datatypes and lengths agree.
    fn apply(&self, inbuf: &Buffer, inoutbuf: &mut Buffer) -> Result<(), ValueError>;
}

impl<R: Reduction + ?Sized> Reduction for &R {
    fn is_commutative(&self) -> bool {
        (**self).is_commutative()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn apply(&self, inbuf: &Buffer, inoutbuf: &mut Buffer) -> Result<(), ValueError> {
        (**self).apply(inbuf, inoutbuf)
    }
}

/// Builtin reduction operators. All are commutative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceOp {
    Sum,
    Prod,
    Min,
    Max,
}

impl ReduceOp {
    pub const ALL: [ReduceOp; 4] = [ReduceOp::Sum, ReduceOp::Prod, ReduceOp::Min, ReduceOp::Max];

    pub fn short_name(self) -> &'static str {
        match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Prod => "prod",
            ReduceOp::Min => "min",
            ReduceOp::Max => "max",
        }
    }

    /// Identity element of the operator in `dt`. Min/Max over floats use
    /// the infinities, integers use the domain bounds. Exact rationals are
    /// unbounded, so Min/Max have no identity there.
    pub fn identity(self, dt: Datatype) -> Option<Scalar> {
        use ReduceOp::*;
        Some(match (self, dt) {
            (Sum, _) => Scalar::from_i64(dt, 0),
            (Prod, _) => Scalar::from_i64(dt, 1),
            (Min, Datatype::Int32) => Scalar::Int32(i32::MAX),
            (Min, Datatype::Int64) => Scalar::Int64(i64::MAX),
            (Min, Datatype::Float64) => Scalar::Float64(f64::INFINITY),
            (Max, Datatype::Int32) => Scalar::Int32(i32::MIN),
            (Max, Datatype::Int64) => Scalar::Int64(i64::MIN),
            (Max, Datatype::Float64) => Scalar::Float64(f64::NEG_INFINITY),
            (Min | Max, Datatype::ExactRational) => return None,
        })
    }

    /// Applies the operator to two scalars of the same datatype.
    pub fn combine(self, a: &Scalar, b: &Scalar) -> Result<Scalar, ValueError> {
        Ok(match (a, b) {
            (Scalar::Int32(x), Scalar::Int32(y)) => Scalar::Int32(self.int32(*x, *y)),
            (Scalar::Int64(x), Scalar::Int64(y)) => Scalar::Int64(self.int64(*x, *y)),
            (Scalar::Float64(x), Scalar::Float64(y)) => Scalar::Float64(self.float64(*x, *y)),
            (Scalar::Rational(x), Scalar::Rational(y)) => Scalar::Rational(self.rational(x, y)),
            _ => {
                return Err(ValueError::DatatypeMismatch {
                    expected: a.datatype(),
                    actual: b.datatype(),
                })
            }
        })
    }

    fn int32(self, a: i32, b: i32) -> i32 {
        match self {
            ReduceOp::Sum => a.wrapping_add(b),
            ReduceOp::Prod => a.wrapping_mul(b),
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
        }
    }

    fn int64(self, a: i64, b: i64) -> i64 {
        match self {
            ReduceOp::Sum => a.wrapping_add(b),
            ReduceOp::Prod => a.wrapping_mul(b),
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
        }
    }

    fn float64(self, a: f64, b: f64) -> f64 {
        // total_cmp orders -0.0 below 0.0, which keeps Min/Max exactly
        // commutative at the bit level.
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Prod => a * b,
            ReduceOp::Min => match a.total_cmp(&b) {
                Ordering::Greater => b,
                _ => a,
            },
            ReduceOp::Max => match a.total_cmp(&b) {
                Ordering::Less => b,
                _ => a,
            },
        }
    }

    fn rational(self, a: &BigRational, b: &BigRational) -> BigRational {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Prod => a * b,
            ReduceOp::Min => a.min(b).clone(),
            ReduceOp::Max => a.max(b).clone(),
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ReduceOp {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(ReduceOp::Sum),
            "prod" | "product" => Ok(ReduceOp::Prod),
            "min" => Ok(ReduceOp::Min),
            "max" => Ok(ReduceOp::Max),
            _ => Err(ValueError::Unknown {
                what: "operator",
                input: s.to_string(),
            }),
        }
    }
}

fn zip_apply<T: Clone>(inbuf: &[T], inout: &mut [T], f: impl Fn(&T, &T) -> T) {
    for (dst, src) in inout.iter_mut().zip(inbuf) {
        *dst = f(src, dst);
    }
}

impl Reduction for ReduceOp {
    fn is_commutative(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        self.short_name().to_string()
    }

    fn apply(&self, inbuf: &Buffer, inoutbuf: &mut Buffer) -> Result<(), ValueError> {
        let op = *self;
        match (inbuf, inoutbuf) {
            (Buffer::Int32(a), Buffer::Int32(b)) => zip_apply(a, b, |x, y| op.int32(*x, *y)),
            (Buffer::Int64(a), Buffer::Int64(b)) => zip_apply(a, b, |x, y| op.int64(*x, *y)),
            (Buffer::Float64(a), Buffer::Float64(b)) => zip_apply(a, b, |x, y| op.float64(*x, *y)),
            (Buffer::Rational(a), Buffer::Rational(b)) => zip_apply(a, b, |x, y| op.rational(x, y)),
            (a, b) => {
                return Err(ValueError::DatatypeMismatch {
                    expected: b.datatype(),
                    actual: a.datatype(),
                })
            }
        }
        Ok(())
    }
}

/// `inoutbuf[i] := op(inbuf[i], inoutbuf[i])` for every `i`.
pub fn reduce_local<R: Reduction + ?Sized>(
    inbuf: &Buffer,
    inoutbuf: &mut Buffer,
    op: &R,
) -> Result<(), ValueError> {
    inoutbuf.check_compatible(inbuf)?;
    op.apply(inbuf, inoutbuf)
}

/// Copies `src` into `dst` element by element.
pub fn local_copy(src: &Buffer, dst: &mut Buffer) -> Result<(), ValueError> {
    dst.check_compatible(src)?;
    dst.clone_from(src);
    Ok(())
}

/// Words over the alphabet `1..=15` packed into an `i64`, four bits per
/// letter, first letter most significant. Zero is the empty word.
///
/// Concatenation of such words is associative but not commutative, which
/// makes [`WordConcat`] a probe for reduction order: a left fold over ranks
/// that each contribute the one-letter word `rank + 1` spells out the ranks
/// in ascending order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordConcat;

impl WordConcat {
    pub const MAX_LETTERS: u32 = 15;

    pub fn letter(rank: usize) -> i64 {
        assert!(rank < Self::MAX_LETTERS as usize, "rank {rank} has no letter");
        rank as i64 + 1
    }

    fn letters(w: i64) -> u32 {
        let bits = 64 - (w as u64).leading_zeros();
        bits.div_ceil(4)
    }

    pub fn concat(a: i64, b: i64) -> i64 {
        let shift = 4 * Self::letters(b);
        if shift >= 64 {
            return b;
        }
        ((a as u64) << shift | b as u64) as i64
    }

    /// Decodes a packed word into its letters.
    pub fn spell(w: i64) -> Vec<u8> {
        let n = Self::letters(w);
        (0..n)
            .rev()
            .map(|k| ((w as u64 >> (4 * k)) & 0xf) as u8)
            .collect()
    }
}

impl Reduction for WordConcat {
    fn is_commutative(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        "concat".to_string()
    }

    fn apply(&self, inbuf: &Buffer, inoutbuf: &mut Buffer) -> Result<(), ValueError> {
        match (inbuf, inoutbuf) {
            (Buffer::Int64(a), Buffer::Int64(b)) => {
                zip_apply(a, b, |x, y| WordConcat::concat(*x, *y));
                Ok(())
            }
            (_, b) => Err(ValueError::Unsupported {
                op: self.name(),
                datatype: b.datatype(),
            }),
        }
    }
}

/// The exact rational `num / den`.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_local_sum_is_elementwise() {
        let a = Buffer::Int64(vec![2, 3]);
        let mut b = Buffer::Int64(vec![10, 20]);
        reduce_local(&a, &mut b, &ReduceOp::Sum).unwrap();
        assert_eq!(b, Buffer::Int64(vec![12, 23]));
    }

    #[test]
    fn reduce_local_max_both_orders() {
        let mut b = Buffer::Int32(vec![7]);
        reduce_local(&Buffer::Int32(vec![5]), &mut b, &ReduceOp::Max).unwrap();
        assert_eq!(b, Buffer::Int32(vec![7]));
        let mut b = Buffer::Int32(vec![7]);
        reduce_local(&Buffer::Int32(vec![9]), &mut b, &ReduceOp::Max).unwrap();
        assert_eq!(b, Buffer::Int32(vec![9]));
    }

    #[test]
    fn identities_leave_values_unchanged() {
        let x = [-5i64, 0, 3, 17];
        for dt in [Datatype::Int32, Datatype::Int64, Datatype::Float64, Datatype::ExactRational] {
            for op in ReduceOp::ALL {
                let Some(id) = op.identity(dt) else {
                    assert_eq!(dt, Datatype::ExactRational);
                    continue;
                };
                let xb = Buffer::from_i64s(dt, &x);
                let mut ident = Buffer::from_scalars(dt, std::iter::repeat_n(id, x.len())).unwrap();
                reduce_local(&xb, &mut ident, &op).unwrap();
                assert_eq!(ident, xb, "{op} {dt}");
            }
        }
    }

    #[test]
    fn reduce_local_rejects_mismatch() {
        let mut b = Buffer::Int64(vec![1, 2]);
        assert_eq!(
            reduce_local(&Buffer::Int64(vec![1]), &mut b, &ReduceOp::Sum),
            Err(ValueError::CountMismatch { expected: 2, actual: 1 })
        );
        assert!(matches!(
            reduce_local(&Buffer::Int32(vec![1, 2]), &mut b, &ReduceOp::Sum),
            Err(ValueError::DatatypeMismatch { .. })
        ));
    }

    #[test]
    fn integer_sum_wraps() {
        let mut b = Buffer::Int32(vec![i32::MAX]);
        reduce_local(&Buffer::Int32(vec![1]), &mut b, &ReduceOp::Sum).unwrap();
        assert_eq!(b, Buffer::Int32(vec![i32::MIN]));
    }

    #[test]
    fn float_min_max_order_signed_zero() {
        let mut b = Buffer::Float64(vec![0.0]);
        reduce_local(&Buffer::Float64(vec![-0.0]), &mut b, &ReduceOp::Min).unwrap();
        assert_eq!(b.get(0), Some(Scalar::Float64(-0.0)));
        let mut c = Buffer::Float64(vec![-0.0]);
        reduce_local(&Buffer::Float64(vec![0.0]), &mut c, &ReduceOp::Min).unwrap();
        assert!(b.bitwise_eq(&c));
    }

    #[test]
    fn local_copy_has_value_semantics() {
        let src = Buffer::Int64(vec![1, 2, 3]);
        let mut dst = Buffer::zeroed(Datatype::Int64, 3);
        local_copy(&src, &mut dst).unwrap();
        assert_eq!(dst, src);
        dst.set(0, Scalar::Int64(99)).unwrap();
        assert_eq!(src, Buffer::Int64(vec![1, 2, 3]));

        let mut empty = Buffer::zeroed(Datatype::Float64, 0);
        local_copy(&Buffer::Float64(vec![]), &mut empty).unwrap();
        assert!(empty.is_empty());
        assert!(local_copy(&src, &mut Buffer::zeroed(Datatype::Int64, 2)).is_err());
    }

    #[test]
    fn sizes_and_extents() {
        assert_eq!(type_size(Datatype::Float64), 8);
        assert_eq!(type_size(Datatype::Int32), 4);
        assert_eq!(type_size(Datatype::Int64), 8);
        for dt in Datatype::ALL {
            assert_eq!(true_extent(dt), (0, type_size(dt)));
        }
    }

    #[test]
    fn word_concat_is_ordered() {
        let w = (0..4).map(WordConcat::letter).reduce(WordConcat::concat).unwrap();
        assert_eq!(WordConcat::spell(w), vec![1, 2, 3, 4]);
        assert_ne!(WordConcat::concat(1, 2), WordConcat::concat(2, 1));
        assert_eq!(WordConcat::concat(0, 5), 5);
        assert_eq!(WordConcat::concat(5, 0), 5);
    }

    #[test]
    fn scalar_parse_round_trips() {
        for (dt, s) in [
            (Datatype::Int32, "-7"),
            (Datatype::Int64, "123456789012"),
            (Datatype::Float64, "0.1"),
            (Datatype::ExactRational, "-3/4"),
        ] {
            let v = Scalar::parse(dt, s).unwrap();
            assert_eq!(v.to_string(), s);
        }
        assert!(Scalar::parse(Datatype::Int32, "x").is_err());
    }

    #[test]
    fn slice_and_write_at() {
        let mut b = Buffer::Int64(vec![0, 1, 2, 3]);
        let s = b.slice(1..3).unwrap();
        assert_eq!(s, Buffer::Int64(vec![1, 2]));
        b.write_at(2, &s).unwrap();
        assert_eq!(b, Buffer::Int64(vec![0, 1, 1, 2]));
        assert!(b.write_at(3, &s).is_err());
        assert!(b.slice(3..5).is_err());
    }
}
