use collsim_core::value::{local_copy, rational, reduce_local, true_extent, type_size, WordConcat};
use collsim_core::{Buffer, Datatype, ReduceOp, Scalar};
use proptest::prelude::*;

#[test]
fn reduce_local_examples() {
    let mut io = Buffer::Int64(vec![10, 20]);
    reduce_local(&Buffer::Int64(vec![2, 3]), &mut io, &ReduceOp::Sum).unwrap();
    assert_eq!(io, Buffer::Int64(vec![12, 23]));

    let mut io = Buffer::Int32(vec![7]);
    reduce_local(&Buffer::Int32(vec![5]), &mut io, &ReduceOp::Max).unwrap();
    assert_eq!(io, Buffer::Int32(vec![7]));
    reduce_local(&Buffer::Int32(vec![9]), &mut io, &ReduceOp::Max).unwrap();
    assert_eq!(io, Buffer::Int32(vec![9]));
}

#[test]
fn reduce_local_keeps_inbuf_on_the_left() {
    let mut io = Buffer::Int64(vec![WordConcat::letter(1)]);
    reduce_local(&Buffer::Int64(vec![WordConcat::letter(0)]), &mut io, &WordConcat).unwrap();
    match io {
        Buffer::Int64(v) => assert_eq!(WordConcat::spell(v[0]), vec![1, 2]),
        _ => unreachable!(),
    }
}

#[test]
fn identities() {
    for dt in Datatype::ALL {
        for op in ReduceOp::ALL {
            let Some(id) = op.identity(dt) else {
                assert_eq!(dt, Datatype::ExactRational);
                continue;
            };
            let x = Buffer::from_i64s(dt, &[-4, 0, 9]);
            let mut io = Buffer::from_scalars(dt, vec![id; 3]).unwrap();
            reduce_local(&x, &mut io, &op).unwrap();
            assert_eq!(io, x, "{op} {dt}");
        }
    }
}

#[test]
fn local_copy_examples() {
    let src = Buffer::Int64(vec![1, 2, 3]);
    let mut dst = Buffer::zeroed(Datatype::Int64, 3);
    local_copy(&src, &mut dst).unwrap();
    assert_eq!(dst, src);
    dst.set(0, Scalar::Int64(100)).unwrap();
    assert_eq!(src, Buffer::Int64(vec![1, 2, 3]));

    let mut empty = Buffer::zeroed(Datatype::Float64, 0);
    local_copy(&Buffer::Float64(vec![]), &mut empty).unwrap();
    assert!(empty.is_empty());

    assert!(local_copy(&src, &mut Buffer::zeroed(Datatype::Int64, 2)).is_err());
    assert!(local_copy(&src, &mut Buffer::zeroed(Datatype::Int32, 3)).is_err());
}

#[test]
fn sizes() {
    assert_eq!(type_size(Datatype::Float64), 8);
    assert_eq!(type_size(Datatype::Int32), 4);
    assert_eq!(type_size(Datatype::Int64), 8);
    for dt in Datatype::ALL {
        assert_eq!(true_extent(dt), (0, type_size(dt)));
    }
}

#[test]
fn ops_are_commutative_and_wrap() {
    for op in ReduceOp::ALL {
        use collsim_core::Reduction;
        assert!(op.is_commutative());
    }
    let mut io = Buffer::Int32(vec![i32::MAX]);
    reduce_local(&Buffer::Int32(vec![1]), &mut io, &ReduceOp::Sum).unwrap();
    assert_eq!(io, Buffer::Int32(vec![i32::MIN]));
}

fn scalar_strategy(dt: Datatype) -> BoxedStrategy<Scalar> {
    match dt {
        Datatype::Int32 => any::<i32>().prop_map(Scalar::Int32).boxed(),
        Datatype::Int64 => any::<i64>().prop_map(Scalar::Int64).boxed(),
        Datatype::Float64 => (-1e6f64..1e6).prop_map(Scalar::Float64).boxed(),
        Datatype::ExactRational => (-50i64..50, 1i64..20)
            .prop_map(|(n, d)| Scalar::Rational(rational(n, d)))
            .boxed(),
    }
}

fn operands() -> impl Strategy<Value = (Datatype, Vec<Scalar>)> {
    prop_oneof![
        Just(Datatype::Int32),
        Just(Datatype::Int64),
        Just(Datatype::Float64),
        Just(Datatype::ExactRational)
    ]
    .prop_flat_map(|dt| (Just(dt), proptest::collection::vec(scalar_strategy(dt), 1..=6)))
}

/// Every way to fully parenthesise `xs` in order.
fn all_brackets(op: ReduceOp, xs: &[Scalar]) -> Vec<Scalar> {
    if xs.len() == 1 {
        return vec![xs[0].clone()];
    }
    let mut out = Vec::new();
    for split in 1..xs.len() {
        for l in all_brackets(op, &xs[..split]) {
            for r in all_brackets(op, &xs[split..]) {
                out.push(op.combine(&l, &r).unwrap());
            }
        }
    }
    out
}

fn permutations(xs: &[Scalar]) -> Vec<Vec<Scalar>> {
    if xs.len() <= 1 {
        return vec![xs.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..xs.len() {
        let mut rest = xs.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

fn same(a: &Scalar, b: &Scalar) -> bool {
    match (a, b) {
        (Scalar::Float64(x), Scalar::Float64(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Exact domains (and float min/max) give one result for every
    /// parenthesisation and permutation of the operands.
    #[test]
    fn exact_ops_associate_and_commute((dt, xs) in operands(), op_idx in 0usize..4) {
        let op = ReduceOp::ALL[op_idx];
        prop_assume!(dt != Datatype::Float64 || matches!(op, ReduceOp::Min | ReduceOp::Max));
        let reference = xs.iter().skip(1).fold(xs[0].clone(), |acc, x| op.combine(&acc, x).unwrap());
        let orders = if xs.len() <= 5 { permutations(&xs) } else { vec![xs.clone(), xs.iter().rev().cloned().collect()] };
        for order in orders {
            for v in all_brackets(op, &order) {
                prop_assert!(same(&v, &reference), "{} {}: {} vs {}", op, dt, v, reference);
            }
        }
    }

    /// Position i of the output depends only on position i of the inputs.
    #[test]
    fn reduce_local_is_elementwise(
        a in proptest::collection::vec(any::<i64>(), 1..10),
        b in proptest::collection::vec(any::<i64>(), 1..10),
        op_idx in 0usize..4,
    ) {
        let n = a.len().min(b.len());
        let op = ReduceOp::ALL[op_idx];
        let mut io = Buffer::Int64(b[..n].to_vec());
        reduce_local(&Buffer::Int64(a[..n].to_vec()), &mut io, &op).unwrap();
        for i in 0..n {
            let mut single = Buffer::Int64(vec![b[i]]);
            reduce_local(&Buffer::Int64(vec![a[i]]), &mut single, &op).unwrap();
            prop_assert_eq!(io.get(i), single.get(0));
        }
    }

    #[test]
    fn scalars_round_trip_through_strings(x in any::<f64>(), y in any::<i64>()) {
        let f = Scalar::Float64(x);
        let back = Scalar::parse(Datatype::Float64, &f.to_string()).unwrap();
        prop_assert!(same(&f, &back));
        let i = Scalar::Int64(y);
        prop_assert_eq!(Scalar::parse(Datatype::Int64, &i.to_string()).unwrap(), i);
    }
}
