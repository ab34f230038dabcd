//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion failed.

use std::process::ExitCode;
use std::time::Instant;

use collsim_core::collectives::{
    allreduce_oracle, allreduce_recursive_doubling, log2floor, pof2, rd_topology, AllreduceParams,
};
use collsim_core::simnet::{self, ExploreConfig, SchedulePolicy, SimConfig, TraceKind};
use collsim_core::value::WordConcat;
use collsim_core::verify::{
    default_ulp_threshold, explore_schedules, replicate_concrete_driver, run_case, sweep, Algorithm, CaseSpec,
    ExploreStrategy, Fault, InputSource, Outcome, SweepGrid, SweepResult,
};
use collsim_core::{Buffer, Datatype, ReduceOp, Scalar, SendBuf};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sweep_verdict(result: &SweepResult) -> Verdict {
    match result.failures().next() {
        None if result.summary.total > 0 => Ok(format!("{} cases, {}", result.summary.total, result.summary)),
        None => Err("grid is empty".into()),
        Some(r) => Err(format!(
            "{}; first failure {} p={} n={} {} {} {} inputs={}: {} {}",
            result.summary,
            r.algorithm,
            r.p,
            r.n,
            r.op,
            r.datatype,
            r.mode,
            r.inputs,
            r.outcome,
            r.detail.clone().unwrap_or_default()
        )),
    }
}

/// Sum/Prod up to p, n <= 10 and Min/Max up to p, n <= 5, 64-bit integers
/// and exact rationals, `r + i` inputs plus 50 random trials per cell.
fn bounded_exact_sweep(algorithm: Algorithm) -> Verdict {
    let grid = SweepGrid::for_algorithm(algorithm)
        .narrow_min_max()
        .with_random_trials(0, 50);
    sweep_verdict(&sweep(&grid))
}

fn rd_sweep() -> Verdict {
    bounded_exact_sweep(Algorithm::RecursiveDoubling)
}

fn rsag_sweep() -> Verdict {
    let verdict = bounded_exact_sweep(Algorithm::ReduceScatterAllgather)?;
    // cells with n < pof2(p) take the short-vector path
    let fallback = (1..=10usize)
        .flat_map(|p| (1..=10usize).map(move |n| (p, n)))
        .filter(|&(p, n)| n < pof2(p as i64) as usize)
        .count();
    Ok(format!("{verdict}; {fallback} shapes per op/datatype use the short-vector fallback"))
}

fn concrete_driver() -> Verdict {
    let mut cases = 0;
    for algorithm in Algorithm::ALL {
        for datatype in [Datatype::Int64, Datatype::ExactRational, Datatype::Float64] {
            for p in 1..=10 {
                let r = replicate_concrete_driver(algorithm, p, 10, datatype);
                ensure(r.passed(), || format!("{algorithm} p={p} {datatype}: {:?}", r.first_mismatch))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} cases equal P(P-1)/2 + P*i on every rank"))
}

fn small_domain() -> Verdict {
    let grid = SweepGrid {
        algorithms: Algorithm::ALL.to_vec(),
        p: 2..=3,
        n: 1..=1,
        ops: ReduceOp::ALL.to_vec(),
        datatypes: Datatype::ALL.to_vec(),
        inputs: vec![InputSource::small_domain(vec![-1, 0, 1])],
        ..SweepGrid::default()
    };
    let result = sweep(&grid);
    let cells = grid.cells();
    let expected: usize = cells.iter().map(|c| 3usize.pow(c.p as u32)).sum();
    ensure(result.reports.len() == expected, || {
        format!("{} assignments checked, expected {expected}", result.reports.len())
    })?;
    let v = sweep_verdict(&result)?;
    Ok(format!("{} cells, every assignment enumerated: {v}", cells.len()))
}

fn schedule_exploration() -> Verdict {
    let mut exhaustive = 0u64;
    let mut sampled = 0u64;
    for algorithm in Algorithm::ALL {
        for p in 1..=4 {
            for n in 1..=2 {
                let spec = CaseSpec::new(algorithm, p, n, ReduceOp::Sum, Datatype::Int64);
                let r = explore_schedules(&spec, &ExploreStrategy::Exhaustive(ExploreConfig::default()));
                ensure(r.passed(), || format!("exhaustive {algorithm} p={p} n={n}: {:?}", r.detail))?;
                exhaustive += r.schedules;
            }
        }
        for p in 1..=10 {
            for n in [2, 10] {
                let spec = CaseSpec::new(algorithm, p, n, ReduceOp::Sum, Datatype::Int64);
                let r = explore_schedules(&spec, &ExploreStrategy::Sampled { seeds: 100 });
                ensure(r.passed() && r.schedules == 100, || {
                    format!("sampled {algorithm} p={p} n={n}: {:?}", r.detail)
                })?;
                sampled += r.schedules;
            }
        }
    }
    Ok(format!(
        "{exhaustive} exhaustive schedules (p<=4, n<=2) and {sampled} seeded schedules (p<=10) agree"
    ))
}

fn message_count_law() -> Verdict {
    let config = SimConfig::default().with_trace(true);
    for p in 1..=16usize {
        let pof2 = pof2(p as i64) as usize;
        let rem = p - pof2;
        let rounds = log2floor(pof2 as i64) as usize;
        let expected = pof2 * rounds + 2 * rem;
        let run = simnet::run(p, &config, SchedulePolicy::LowestRank, |ctx| async move {
            let params = AllreduceParams::new(3, Datatype::Int64, ReduceOp::Sum);
            let input = Buffer::from_i64s(Datatype::Int64, &[ctx.rank() as i64; 3]);
            let mut out = Buffer::zeroed(Datatype::Int64, 3);
            allreduce_recursive_doubling(&ctx, SendBuf::Buf(&input), &mut out, &params).await?;
            Ok(out)
        })
        .map_err(|e| e.to_string())?;
        ensure(run.outcome.completed().is_some(), || format!("p={p}: {:?}", run.outcome))?;
        let sends = run.trace.iter().filter(|e| e.kind.is_send()).count();
        ensure(sends == expected, || format!("p={p}: {sends} sends in trace, expected {expected}"))?;
        ensure(run.messages_sent() as usize == expected, || {
            format!("p={p}: simulator counted {} sends", run.messages_sent())
        })?;
        let topo = rd_topology(p);
        for rank in 0..p {
            let posts = run
                .trace
                .iter()
                .filter(|e| e.rank == rank && e.kind == TraceKind::SendrecvPost)
                .count();
            let want = if topo.newrank[rank].is_some() { rounds } else { 0 };
            ensure(posts == want, || format!("p={p} rank {rank}: {posts} sendrecv posts, expected {want}"))?;
        }
    }
    Ok("p=1..16 send totals equal pof2*log2(pof2) + 2*rem".into())
}

fn topology() -> Verdict {
    let t = rd_topology(6);
    ensure(t.pof2 == 4 && t.rem == 2, || format!("pof2={} rem={}", t.pof2, t.rem))?;
    ensure(t.newrank_table() == vec![-1, 0, -1, 1, 2, 3], || format!("{:?}", t.newrank_table()))?;
    for size in 1..=64usize {
        let t = rd_topology(size);
        let mut seen = vec![false; t.pof2];
        for nr in t.newrank.iter().flatten() {
            ensure(*nr < t.pof2 && !seen[*nr], || format!("size {size}: newrank {nr} repeated or out of range"))?;
            seen[*nr] = true;
        }
        ensure(seen.iter().all(|&s| s), || format!("size {size}: newrank map not onto"))?;
        for nr in 0..t.pof2 {
            ensure(t.newrank[t.real_rank(nr)] == Some(nr), || format!("size {size}: real_rank({nr}) wrong"))?;
        }
    }
    Ok("rd_topology(6) = [-1,0,-1,1,2,3]; bijection onto [0,pof2) for sizes 1..64".into())
}

fn float_behaviour() -> Verdict {
    let grid = SweepGrid {
        algorithms: Algorithm::ALL.to_vec(),
        datatypes: vec![Datatype::Float64],
        ..SweepGrid::default()
    }
    .with_random_trials(0, 50);
    let result = sweep(&grid);
    let v = sweep_verdict(&result)?;
    let exact_ok = result
        .reports
        .iter()
        .filter(|r| matches!(r.op, ReduceOp::Min | ReduceOp::Max))
        .all(|r| r.ulp_max.is_none());
    ensure(exact_ok, || "min/max reports carry ULP data".into())?;
    for r in &result.reports {
        if let Some(u) = r.ulp_max {
            let bound = default_ulp_threshold(r.p);
            ensure(u <= bound, || format!("p={} ulp {u} above {bound}", r.p))?;
        }
    }
    let max = |op: ReduceOp| {
        result
            .reports
            .iter()
            .filter(|r| r.op == op)
            .filter_map(|r| r.ulp_max)
            .max()
            .unwrap_or(0)
    };
    Ok(format!(
        "{v}; min/max exact; max ulp sum={} prod={} (bound 4*ceil(log2 P))",
        max(ReduceOp::Sum),
        max(ReduceOp::Prod)
    ))
}

fn harness_soundness() -> Verdict {
    let mut injected = 0;
    for algorithm in Algorithm::ALL {
        for datatype in Datatype::ALL {
            for op in ReduceOp::ALL {
                for p in 1..=6 {
                    for n in 1..=4 {
                        for rank in 0..p {
                            for index in 0..n {
                                let spec = CaseSpec::new(algorithm, p, n, op, datatype)
                                    .with_fault(Fault::CorruptOutput { rank, index });
                                let r = run_case(&spec);
                                let m = r.first_mismatch.as_ref();
                                ensure(
                                    r.outcome == Outcome::Mismatch && m.map(|m| (m.rank, m.index)) == Some((rank, index)),
                                    || format!("{algorithm} {op} {datatype} p={p} n={n} rank {rank} index {index}: {:?}", r),
                                )?;
                                injected += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut deadlocks = 0;
    for algorithm in Algorithm::ALL {
        for p in 2..=10 {
            let r = run_case(&CaseSpec::new(algorithm, p, 3, ReduceOp::Sum, Datatype::Int64).with_fault(Fault::MutualRecv));
            let detail = r.detail.clone().unwrap_or_default();
            ensure(
                r.outcome == Outcome::Deadlock
                    && detail.contains("rank 0 waits for [recv from 1")
                    && detail.contains("rank 1 waits for [recv from 0"),
                || format!("{algorithm} p={p}: {} {detail}", r.outcome),
            )?;
            deadlocks += 1;
        }
    }
    Ok(format!(
        "{injected}/{injected} corruptions reported at the injected rank and index; {deadlocks}/{deadlocks} mutual-recv deadlocks name ranks 0 and 1"
    ))
}

fn noncommutative_branch() -> Verdict {
    let config = SimConfig::default().with_trace(true);
    let (mut ordered, mut swapped) = (0usize, 0usize);
    for p in 1..=WordConcat::MAX_LETTERS as usize {
        for n in 1..=3usize {
            let run = simnet::run(p, &config, SchedulePolicy::LowestRank, move |ctx| async move {
                let params = AllreduceParams::new(n, Datatype::Int64, WordConcat);
                let mine = Buffer::from_i64s(Datatype::Int64, &vec![WordConcat::letter(ctx.rank()); n]);
                let mut variant = mine.clone();
                let dup = ctx.dup();
                allreduce_recursive_doubling(&dup, SendBuf::InPlace, &mut variant, &params).await?;
                let oracle = allreduce_oracle(&ctx, &mine, &params).await?;
                Ok((variant, oracle))
            })
            .map_err(|e| e.to_string())?;
            let results = run.outcome.completed().ok_or_else(|| format!("p={p} n={n}: {:?}", run.outcome))?;
            let expected: Vec<u8> = (0..p).map(|r| WordConcat::letter(r) as u8).collect();
            for (rank, (variant, oracle)) in results.iter().enumerate() {
                ensure(variant == oracle, || format!("p={p} n={n} rank {rank}: {variant} vs oracle {oracle}"))?;
                for v in variant.iter() {
                    let word = match v {
                        Scalar::Int64(w) => w,
                        other => return Err(format!("unexpected element {other}")),
                    };
                    ensure(WordConcat::spell(word) == expected, || {
                        format!("p={p} rank {rank}: spelled {:?}", WordConcat::spell(word))
                    })?;
                }
            }
            // Only the variant's swapped branch copies; the oracle never does.
            let rem = p - pof2(p as i64) as usize;
            let copies = run.trace.iter().filter(|e| e.kind == TraceKind::Copy).count();
            let oracle_reduces = p - 1;
            let reduces = run.trace.iter().filter(|e| e.kind == TraceKind::ReduceLocal).count();
            swapped += copies;
            ordered += reduces - oracle_reduces - rem - copies;
        }
    }
    ensure(ordered > 0 && swapped > 0, || format!("ordered={ordered} swapped={swapped}"))?;
    Ok(format!(
        "p=1..15 words spell ranks in order and equal the oracle fold; {ordered} in-order and {swapped} swapped reductions"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("recursive doubling bounded sweep", rd_sweep),
        ("reduce-scatter/allgather bounded sweep", rsag_sweep),
        ("concrete driver closed form", concrete_driver),
        ("exhaustive small-domain inputs", small_domain),
        ("schedule exploration", schedule_exploration),
        ("recursive doubling message count", message_count_law),
        ("topology table and bijection", topology),
        ("float64 behaviour", float_behaviour),
        ("harness soundness", harness_soundness),
        ("noncommutative branch coverage", noncommutative_branch),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS [{:02}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:02}] {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
