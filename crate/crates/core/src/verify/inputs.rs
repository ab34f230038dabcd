//! Concrete stand-ins for symbolic per-rank inputs.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use num::{BigInt, BigRational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::value::{Buffer, Datatype, ReduceOp, Scalar};

/// Assignments above this size are sampled rather than enumerated.
pub const SMALL_DOMAIN_LIMIT: usize = 6561;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputSource {
    /// `x_r[i] = r + i`.
    Ramp,
    /// Every assignment of `values` to the `p * n` input slots, or `limit`
    /// seeded samples when there are more than `limit` assignments.
    SmallDomain { values: Vec<i64>, limit: usize, seed: u64 },
    /// `trials` seeded random assignments.
    Random { seed: u64, trials: usize },
}

impl InputSource {
    pub fn small_domain(values: Vec<i64>) -> InputSource {
        InputSource::SmallDomain {
            values,
            limit: SMALL_DOMAIN_LIMIT,
            seed: 0,
        }
    }

    pub fn random(seed: u64, trials: usize) -> InputSource {
        InputSource::Random { seed, trials }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            InputSource::Ramp => "appendixc",
            InputSource::SmallDomain { .. } => "smalldomain",
            InputSource::Random { .. } => "random",
        }
    }
}

/// One labelled assignment of inputs, one buffer per rank.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSet {
    pub label: String,
    pub buffers: Vec<Buffer>,
}

pub fn ramp_inputs(p: usize, n: usize, dt: Datatype) -> Vec<Buffer> {
    (0..p)
        .map(|r| {
            let values: Vec<i64> = (0..n).map(|i| (r + i) as i64).collect();
            Buffer::from_i64s(dt, &values)
        })
        .collect()
}

fn cell_rng(seed: u64, p: usize, n: usize, dt: Datatype, op: ReduceOp, trial: usize) -> ChaCha8Rng {
    let mut h = DefaultHasher::new();
    (seed, p, n, dt, op, trial).hash(&mut h);
    ChaCha8Rng::seed_from_u64(h.finish())
}

/// A random element of `dt` suited to `op`: full-range integers (sums and
/// products wrap), small-numerator rationals, and floats in `[0.5, 2)` for
/// Sum/Prod so that no cancellation occurs.
fn random_scalar(rng: &mut ChaCha8Rng, dt: Datatype, op: ReduceOp) -> Scalar {
    match dt {
        Datatype::Int32 => Scalar::Int32(rng.random()),
        Datatype::Int64 => Scalar::Int64(rng.random()),
        Datatype::Float64 => Scalar::Float64(match op {
            ReduceOp::Sum | ReduceOp::Prod => rng.random_range(0.5..2.0),
            ReduceOp::Min | ReduceOp::Max => rng.random_range(-1000.0..1000.0),
        }),
        Datatype::ExactRational => {
            let num: i64 = rng.random_range(-20..=20);
            let den: i64 = rng.random_range(1..=12);
            Scalar::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
        }
    }
}

fn buffers_from_values(p: usize, n: usize, dt: Datatype, values: &[i64]) -> Vec<Buffer> {
    (0..p)
        .map(|r| Buffer::from_i64s(dt, &values[r * n..(r + 1) * n]))
        .collect()
}

/// Expands `source` into concrete input sets for one grid cell.
pub fn generate(source: &InputSource, p: usize, n: usize, dt: Datatype, op: ReduceOp) -> Vec<InputSet> {
    match source {
        InputSource::Ramp => vec![InputSet {
            label: "appendixc".to_string(),
            buffers: ramp_inputs(p, n, dt),
        }],
        InputSource::Random { seed, trials } => (0..*trials)
            .map(|t| {
                let mut rng = cell_rng(*seed, p, n, dt, op, t);
                let buffers = (0..p)
                    .map(|_| {
                        Buffer::from_scalars(dt, (0..n).map(|_| random_scalar(&mut rng, dt, op)))
                            .expect("generated scalars match datatype")
                    })
                    .collect();
                InputSet {
                    label: format!("random:{seed}#{t}"),
                    buffers,
                }
            })
            .collect(),
        InputSource::SmallDomain { values, limit, seed } => {
            let slots = p * n;
            let k = values.len();
            if k == 0 {
                return Vec::new();
            }
            let total = u32::try_from(slots)
                .ok()
                .and_then(|s| k.checked_pow(s))
                .filter(|&t| t <= *limit);
            match total {
                Some(total) => (0..total)
                    .map(|code| {
                        let mut c = code;
                        let assignment: Vec<i64> = (0..slots)
                            .map(|_| {
                                let v = values[c % k];
                                c /= k;
                                v
                            })
                            .collect();
                        InputSet {
                            label: format!("smalldomain#{code}"),
                            buffers: buffers_from_values(p, n, dt, &assignment),
                        }
                    })
                    .collect(),
                None => (0..*limit)
                    .map(|t| {
                        let mut rng = cell_rng(*seed, p, n, dt, op, t);
                        let assignment: Vec<i64> =
                            (0..slots).map(|_| values[rng.random_range(0..k)]).collect();
                        InputSet {
                            label: format!("smalldomain-sample:{seed}#{t}"),
                            buffers: buffers_from_values(p, n, dt, &assignment),
                        }
                    })
                    .collect(),
            }
        }
    }
}
