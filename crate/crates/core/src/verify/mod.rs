//! Differential verification of the allreduce algorithms against the
//! reduce-then-broadcast oracle.
//!
//! A case runs one algorithm and the oracle in the same simulated world,
//! mirroring a concrete test driver: each rank duplicates the world
//! communicator, runs the algorithm on the duplicate, then runs the oracle on
//! the world communicator with pristine copies of its input.

mod compare;
mod explore;
mod inputs;
mod output;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::collectives::{
    allreduce_oracle, allreduce_recursive_doubling, allreduce_reduce_scatter_allgather, AllreduceParams,
};
use crate::simnet::{self, CommId, RankContext, Schedule, SchedulePolicy, SendMode, SimConfig, SimError, TraceEvent};
use crate::value::{Buffer, Datatype, ReduceOp, Scalar, SendBuf, ValueError};

pub use compare::{
    ceil_log2, compare_buffers, default_ulp_threshold, policy_for, ulp_distance, Comparison, EqualityPolicy,
    UlpStats,
};
pub use explore::{default_strategy, explore_schedules, ExploreStrategy};
pub use inputs::{ramp_inputs, generate, InputSet, InputSource, SMALL_DOMAIN_LIMIT};
pub use output::{parse_csv, parse_json, to_csv, to_json, to_text, CSV_COLUMNS};
pub use sweep::{sweep, OpLimit, SweepGrid, SweepResult, SweepSummary};

/// Tag of the messages used by [`Fault::MutualRecv`].
pub const FAULT_TAG: u32 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rd")]
    RecursiveDoubling,
    #[serde(rename = "rsag")]
    ReduceScatterAllgather,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::RecursiveDoubling, Algorithm::ReduceScatterAllgather];

    pub fn short_name(self) -> &'static str {
        match self {
            Algorithm::RecursiveDoubling => "rd",
            Algorithm::ReduceScatterAllgather => "rsag",
        }
    }

    pub async fn run(
        self,
        ctx: &RankContext,
        sendbuf: SendBuf<'_>,
        recvbuf: &mut Buffer,
        params: &AllreduceParams,
    ) -> Result<(), SimError> {
        match self {
            Algorithm::RecursiveDoubling => allreduce_recursive_doubling(ctx, sendbuf, recvbuf, params).await,
            Algorithm::ReduceScatterAllgather => {
                allreduce_reduce_scatter_allgather(ctx, sendbuf, recvbuf, params).await
            }
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Algorithm {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rd" | "recursive-doubling" => Ok(Algorithm::RecursiveDoubling),
            "rsag" | "reduce-scatter-allgather" => Ok(Algorithm::ReduceScatterAllgather),
            _ => Err(ValueError::Unknown {
                what: "algorithm",
                input: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placement {
    #[default]
    OutOfPlace,
    /// The contribution is preloaded into the receive buffer.
    InPlace,
}

/// Send semantics and buffer placement of one case.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Mode {
    pub send: SendMode,
    pub placement: Placement,
}

impl Mode {
    pub fn new(send: SendMode, placement: Placement) -> Mode {
        Mode { send, placement }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let place = match self.placement {
            Placement::OutOfPlace => "out-of-place",
            Placement::InPlace => "in-place",
        };
        write!(f, "{}/{}", self.send, place)
    }
}

impl FromStr for Mode {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ValueError::Unknown {
            what: "mode",
            input: s.to_string(),
        };
        let (send, place) = s.split_once('/').ok_or_else(bad)?;
        let send = match send {
            "buffered" => SendMode::Buffered,
            "sync" => SendMode::Synchronous,
            _ => return Err(bad()),
        };
        let placement = match place {
            "out-of-place" => Placement::OutOfPlace,
            "in-place" => Placement::InPlace,
            _ => return Err(bad()),
        };
        Ok(Mode { send, placement })
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Mode {
    type Error = ValueError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Deliberate defects used to check that the harness notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Overwrite one element of one rank's algorithm output.
    CorruptOutput { rank: usize, index: usize },
    /// Ranks 0 and 1 first receive from each other; nobody sends.
    MutualRecv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Mismatch,
    Deadlock,
    Error,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Mismatch => "mismatch",
            Outcome::Deadlock => "deadlock",
            Outcome::Error => "error",
        })
    }
}

/// First element where the algorithm disagreed with the expected value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub rank: usize,
    pub index: usize,
    pub expected: String,
    pub actual: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ulp: Option<u64>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rank {} index {}: expected {} got {}",
            self.rank, self.index, self.expected, self.actual
        )
    }
}

/// Everything needed to rerun a case in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub inputs: Vec<Vec<String>>,
    pub schedule: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ulp_threshold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub algorithm: Algorithm,
    pub p: usize,
    pub n: usize,
    pub op: ReduceOp,
    pub datatype: Datatype,
    pub mode: Mode,
    pub inputs: String,
    pub outcome: Outcome,
    pub first_mismatch: Option<Mismatch>,
    pub ulp_max: Option<u64>,
    pub ulp_mean: Option<f64>,
    pub messages: u64,
    pub schedules: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<Replay>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    /// Drops the replay payload from passing reports.
    pub fn compact(mut self) -> Self {
        if self.passed() {
            self.replay = None;
        }
        self
    }

    fn blank(spec: &CaseSpec) -> Self {
        VerificationReport {
            algorithm: spec.algorithm,
            p: spec.p,
            n: spec.n,
            op: spec.op,
            datatype: spec.datatype,
            mode: spec.mode,
            inputs: spec.input_label.clone(),
            outcome: Outcome::Pass,
            first_mismatch: None,
            ulp_max: None,
            ulp_mean: None,
            messages: 0,
            schedules: 0,
            detail: None,
            replay: None,
        }
    }

    fn fail(&mut self, outcome: Outcome, detail: impl Into<String>) {
        self.outcome = outcome;
        self.detail = Some(detail.into());
    }
}

/// One verification case: an algorithm, its parameters, and per-rank inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub algorithm: Algorithm,
    pub p: usize,
    pub n: usize,
    pub op: ReduceOp,
    pub datatype: Datatype,
    pub mode: Mode,
    pub inputs: Vec<Buffer>,
    pub input_label: String,
    pub policy: SchedulePolicy,
    pub ulp_threshold: Option<u64>,
    pub fault: Option<Fault>,
}

impl CaseSpec {
    /// A case fed with the `x_r[i] = r + i` inputs under default settings.
    pub fn new(algorithm: Algorithm, p: usize, n: usize, op: ReduceOp, datatype: Datatype) -> CaseSpec {
        CaseSpec {
            algorithm,
            p,
            n,
            op,
            datatype,
            mode: Mode::default(),
            inputs: ramp_inputs(p, n, datatype),
            input_label: "appendixc".to_string(),
            policy: SchedulePolicy::LowestRank,
            ulp_threshold: None,
            fault: None,
        }
    }

    pub fn with_inputs(mut self, label: impl Into<String>, inputs: Vec<Buffer>) -> Self {
        self.input_label = label.into();
        self.inputs = inputs;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_policy(mut self, policy: SchedulePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn with_ulp_threshold(mut self, threshold: u64) -> Self {
        self.ulp_threshold = Some(threshold);
        self
    }

    pub fn equality_policy(&self) -> EqualityPolicy {
        policy_for(self.datatype, self.op, self.p, self.ulp_threshold)
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig::default().with_mode(self.mode.send)
    }

    fn validate(&self) -> Result<(), String> {
        if self.p == 0 || self.p > simnet::MAX_RANKS {
            return Err(format!("process count {} out of range", self.p));
        }
        if self.inputs.len() != self.p {
            return Err(format!("{} input buffers for {} ranks", self.inputs.len(), self.p));
        }
        if let Some(b) = self
            .inputs
            .iter()
            .find(|b| b.len() != self.n || b.datatype() != self.datatype)
        {
            return Err(format!(
                "input buffer of {} {} elements, expected {} {}",
                b.len(),
                b.datatype(),
                self.n,
                self.datatype
            ));
        }
        match self.fault {
            Some(Fault::MutualRecv) if self.p < 2 => Err("mutual-recv fault needs two ranks".into()),
            Some(Fault::CorruptOutput { rank, index }) if rank >= self.p || index >= self.n => {
                Err(format!("corruption target rank {rank} index {index} out of range"))
            }
            _ => Ok(()),
        }
    }

    fn replay_data(&self, schedule: Schedule) -> Replay {
        Replay {
            inputs: self.inputs.iter().map(Buffer::to_strings).collect(),
            schedule,
            fault: self.fault,
            ulp_threshold: self.ulp_threshold,
        }
    }

    /// The per-rank driver program for this case.
    fn program(&self) -> impl Fn(RankContext) -> std::pin::Pin<Box<dyn std::future::Future<Output = Result<RankResult, SimError>>>> {
        let inputs = self.inputs.clone();
        let algorithm = self.algorithm;
        let params = AllreduceParams::new(self.n, self.datatype, self.op);
        let placement = self.mode.placement;
        let fault = self.fault;
        move |ctx: RankContext| {
            let input = inputs[ctx.rank()].clone();
            let params = params.clone();
            Box::pin(async move {
                if fault == Some(Fault::MutualRecv) && ctx.rank() < 2 {
                    ctx.recv(1 - ctx.rank(), FAULT_TAG).await?;
                }
                let mycomm = ctx.dup();
                let mut variant = match placement {
                    Placement::InPlace => input.clone(),
                    Placement::OutOfPlace => Buffer::zeroed(params.datatype, params.count),
                };
                let sendbuf = match placement {
                    Placement::InPlace => SendBuf::InPlace,
                    Placement::OutOfPlace => SendBuf::Buf(&input),
                };
                algorithm.run(&mycomm, sendbuf, &mut variant, &params).await?;
                if let Some(Fault::CorruptOutput { rank, index }) = fault {
                    if rank == ctx.rank() {
                        let v = variant.get(index).ok_or(ValueError::OutOfBounds {
                            start: index,
                            end: index + 1,
                            len: variant.len(),
                        })?;
                        variant.set(index, corrupt(v))?;
                    }
                }
                let oracle = allreduce_oracle(&ctx, &input, &params).await?;
                Ok(RankResult { variant, oracle })
            })
        }
    }
}

/// A value guaranteed to differ from `v` by more than any ULP tolerance.
fn corrupt(v: Scalar) -> Scalar {
    match v {
        Scalar::Int32(x) => Scalar::Int32(x.wrapping_add(1)),
        Scalar::Int64(x) => Scalar::Int64(x.wrapping_add(1)),
        Scalar::Float64(x) => Scalar::Float64(if x == 0.0 { 1.0 } else { -x }),
        Scalar::Rational(x) => Scalar::Rational(x + crate::value::rational(1, 1)),
    }
}

/// What each rank ends a case with.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub variant: Buffer,
    pub oracle: Buffer,
}

/// The variant communicator created by the driver's single `dup`.
const VARIANT_COMM: CommId = CommId::Dup(1);

/// Judges per-rank results: oracle agreement, variant against oracle, and
/// agreement of the variant across ranks.
fn evaluate(spec: &CaseSpec, results: &[RankResult], report: &mut VerificationReport) {
    let policy = spec.equality_policy();
    if let Some(r) = results.iter().position(|x| !x.oracle.bitwise_eq(&results[0].oracle)) {
        report.fail(Outcome::Error, format!("oracle results disagree between ranks 0 and {r}"));
        return;
    }
    let mut stats = UlpStats::default();
    let mut track_ulp = false;
    for (rank, res) in results.iter().enumerate() {
        match compare_buffers(&res.oracle, &res.variant, policy) {
            Err(e) => {
                report.fail(Outcome::Error, format!("rank {rank}: {e}"));
                return;
            }
            Ok(Comparison::Mismatch {
                index,
                expected,
                actual,
                ulp,
            }) => {
                report.first_mismatch = Some(Mismatch {
                    rank,
                    index,
                    expected: expected.to_string(),
                    actual: actual.to_string(),
                    ulp,
                });
                report.ulp_max = ulp;
                report.fail(Outcome::Mismatch, "algorithm result differs from oracle");
                return;
            }
            Ok(Comparison::Match { ulp }) => {
                if let Some(u) = ulp {
                    track_ulp = true;
                    stats.merge(&u);
                }
            }
        }
    }
    let reference = &results[0].variant;
    for (rank, res) in results.iter().enumerate().skip(1) {
        if let Ok(Comparison::Mismatch {
            index,
            expected,
            actual,
            ..
        }) = compare_buffers(reference, &res.variant, EqualityPolicy::Exact)
        {
            report.first_mismatch = Some(Mismatch {
                rank,
                index,
                expected: expected.to_string(),
                actual: actual.to_string(),
                ulp: None,
            });
            report.fail(Outcome::Mismatch, format!("ranks 0 and {rank} hold different results"));
            return;
        }
    }
    if track_ulp {
        report.ulp_max = Some(stats.max);
        report.ulp_mean = Some(stats.mean());
    }
}

struct Execution {
    report: VerificationReport,
    results: Option<Vec<RankResult>>,
    trace: Vec<TraceEvent>,
}

fn execute_with(spec: &CaseSpec, trace: bool) -> Execution {
    let mut report = VerificationReport::blank(spec);
    if let Err(msg) = spec.validate() {
        report.fail(Outcome::Error, msg);
        return Execution {
            report,
            results: None,
            trace: Vec::new(),
        };
    }
    let config = spec.sim_config().with_trace(trace);
    let run = match simnet::run(spec.p, &config, spec.policy.clone(), spec.program()) {
        Ok(run) => run,
        Err(e) => {
            report.fail(Outcome::Error, e.to_string());
            return Execution {
                report,
                results: None,
                trace: Vec::new(),
            };
        }
    };
    report.schedules = 1;
    report.messages = run.sends_by_comm.get(&VARIANT_COMM).copied().unwrap_or(0);
    report.replay = Some(spec.replay_data(run.schedule.clone()));
    let results = match run.outcome {
        simnet::Outcome::Completed { results, unreceived } => {
            if unreceived.is_empty() {
                evaluate(spec, &results, &mut report);
            } else {
                report.fail(Outcome::Error, format!("{} message(s) never received", unreceived.len()));
            }
            Some(results)
        }
        simnet::Outcome::Deadlock(d) => {
            report.fail(Outcome::Deadlock, d.to_string());
            None
        }
        simnet::Outcome::Failed { rank, error } => {
            report.fail(Outcome::Error, format!("rank {rank}: {error}"));
            None
        }
        simnet::Outcome::StepLimit { steps } => {
            report.fail(Outcome::Error, format!("step limit reached after {steps} steps"));
            None
        }
    };
    Execution {
        report,
        results,
        trace: run.trace,
    }
}

/// Runs `spec` once under its schedule policy. Per-rank results are
/// returned alongside the report when every rank completed.
pub(crate) fn execute(spec: &CaseSpec) -> (VerificationReport, Option<Vec<RankResult>>) {
    let e = execute_with(spec, false);
    (e.report, e.results)
}

/// Like [`run_case`], also returning the event trace of the run.
pub fn trace_case(spec: &CaseSpec) -> (VerificationReport, Vec<TraceEvent>) {
    let e = execute_with(spec, true);
    (e.report, e.trace)
}

/// Runs the algorithm and the oracle on identical inputs and compares them.
/// Simulator failures end up in the report's outcome.
pub fn run_case(spec: &CaseSpec) -> VerificationReport {
    execute(spec).0
}

/// Reproduces the concrete test driver: `x_r[i] = r + i`, Sum, and checks
/// both the oracle comparison and the closed form `P(P-1)/2 + P*i` on every
/// rank.
pub fn replicate_concrete_driver(algorithm: Algorithm, p: usize, n: usize, datatype: Datatype) -> VerificationReport {
    let spec = CaseSpec::new(algorithm, p, n, ReduceOp::Sum, datatype);
    let (mut report, results) = execute(&spec);
    let Some(results) = results else {
        return report;
    };
    if !report.passed() {
        return report;
    }
    let base = (p * p.saturating_sub(1) / 2) as i64;
    for (rank, res) in results.iter().enumerate() {
        for i in 0..n {
            let expected = Scalar::from_i64(datatype, base + (p * i) as i64);
            for (buf, which) in [(&res.variant, "algorithm"), (&res.oracle, "oracle")] {
                let actual = buf.get(i).expect("length checked by evaluate");
                if actual != expected {
                    report.first_mismatch = Some(Mismatch {
                        rank,
                        index: i,
                        expected: expected.to_string(),
                        actual: actual.to_string(),
                        ulp: None,
                    });
                    report.fail(Outcome::Mismatch, format!("{which} result differs from closed form"));
                    return report;
                }
            }
        }
    }
    report
}

/// Rebuilds the case a report was produced from, pinned to its recorded
/// schedule.
pub fn replay_spec(report: &VerificationReport) -> Result<CaseSpec, ValueError> {
    let replay = report.replay.as_ref().ok_or(ValueError::Unknown {
        what: "replay data for case",
        input: report.inputs.clone(),
    })?;
    let inputs = replay
        .inputs
        .iter()
        .map(|v| Buffer::parse(report.datatype, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CaseSpec {
        algorithm: report.algorithm,
        p: report.p,
        n: report.n,
        op: report.op,
        datatype: report.datatype,
        mode: report.mode,
        inputs,
        input_label: report.inputs.clone(),
        policy: SchedulePolicy::Replay(replay.schedule.clone()),
        ulp_threshold: replay.ulp_threshold,
        fault: replay.fault,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rd_four_ranks_ramp_inputs() {
        let r = run_case(&CaseSpec::new(Algorithm::RecursiveDoubling, 4, 2, ReduceOp::Sum, Datatype::Int64));
        assert_eq!(r.outcome, Outcome::Pass, "{r:?}");
        assert_eq!(r.messages, 8);
    }

    #[test]
    fn single_rank_in_place_prod() {
        let spec = CaseSpec::new(Algorithm::RecursiveDoubling, 1, 1, ReduceOp::Prod, Datatype::Int32)
            .with_inputs("seven", vec![Buffer::Int32(vec![7])])
            .with_mode(Mode::new(SendMode::Buffered, Placement::InPlace));
        let (r, results) = execute(&spec);
        assert!(r.passed());
        assert_eq!(results.unwrap()[0].variant, Buffer::Int32(vec![7]));
    }

    #[test]
    fn invalid_specs_report_errors() {
        let mut spec = CaseSpec::new(Algorithm::RecursiveDoubling, 3, 2, ReduceOp::Sum, Datatype::Int64);
        spec.inputs.pop();
        assert_eq!(run_case(&spec).outcome, Outcome::Error);
        let spec = CaseSpec::new(Algorithm::RecursiveDoubling, 1, 2, ReduceOp::Sum, Datatype::Int64)
            .with_fault(Fault::MutualRecv);
        assert_eq!(run_case(&spec).outcome, Outcome::Error);
    }

    #[test]
    fn corruption_is_caught() {
        let spec = CaseSpec::new(Algorithm::ReduceScatterAllgather, 5, 6, ReduceOp::Sum, Datatype::Float64)
            .with_fault(Fault::CorruptOutput { rank: 3, index: 4 });
        let r = run_case(&spec);
        assert_eq!(r.outcome, Outcome::Mismatch);
        let m = r.first_mismatch.unwrap();
        assert_eq!((m.rank, m.index), (3, 4));
    }

    #[test]
    fn mode_strings_round_trip() {
        for send in [SendMode::Buffered, SendMode::Synchronous] {
            for placement in [Placement::InPlace, Placement::OutOfPlace] {
                let m = Mode::new(send, placement);
                assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
            }
        }
        assert!("eager/in-place".parse::<Mode>().is_err());
    }
}
