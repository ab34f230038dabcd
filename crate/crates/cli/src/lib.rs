//! Argument parsing and subcommand dispatch for the `collsim` binary.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use collsim_core::simnet::{format_trace, ExploreConfig, SchedulePolicy, SendMode, MAX_RANKS};
use collsim_core::verify::{
    default_strategy, explore_schedules, generate, to_csv, to_json, to_text, trace_case, Algorithm, CaseSpec,
    ExploreStrategy, InputSource, Mode, Placement, SweepGrid, SweepSummary, VerificationReport,
};
use collsim_core::{Datatype, ReduceOp};
use rayon::prelude::*;

/// Exit status when every checked case passed.
pub const EXIT_PASS: u8 = 0;
/// Exit status when any case failed.
pub const EXIT_FAIL: u8 = 1;
/// Exit status for invalid arguments.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "collsim",
    version,
    about = "Differential verification of allreduce algorithms on a simulated message-passing world"
)]
pub struct Cli {
    /// With -vv, print failure details to standard error.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify every case of a parameter grid against the oracle.
    Sweep(SweepArgs),
    /// Verify a single parameter combination.
    Case(CaseArgs),
    /// Check that a grid of cases behaves identically under many schedules.
    Explore(ExploreArgs),
    /// Run one case with tracing and print the event trace.
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgChoice {
    Rd,
    Rsag,
    All,
}

impl AlgChoice {
    fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgChoice::Rd => vec![Algorithm::RecursiveDoubling],
            AlgChoice::Rsag => vec![Algorithm::ReduceScatterAllgather],
            AlgChoice::All => Algorithm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SendChoice {
    Buffered,
    Sync,
}

impl From<SendChoice> for SendMode {
    fn from(c: SendChoice) -> SendMode {
        match c {
            SendChoice::Buffered => SendMode::Buffered,
            SendChoice::Sync => SendMode::Synchronous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InPlaceChoice {
    On,
    Off,
    Both,
}

impl InPlaceChoice {
    fn placements(self) -> Vec<Placement> {
        match self {
            InPlaceChoice::On => vec![Placement::InPlace],
            InPlaceChoice::Off => vec![Placement::OutOfPlace],
            InPlaceChoice::Both => vec![Placement::OutOfPlace, Placement::InPlace],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputChoice {
    /// `x_r[i] = r + i`
    #[value(name = "appendixc", alias = "ramp")]
    Ramp,
    /// Every assignment of {-1, 0, 1}, sampled when there are too many.
    Smalldomain,
    /// `--trials` seeded random assignments.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Input, mode and output options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Send semantics.
    #[arg(long, value_enum, default_value_t = SendChoice::Buffered)]
    pub mode: SendChoice,
    /// In-place calls, out-of-place calls, or both.
    #[arg(long, value_enum, default_value_t = InPlaceChoice::Both)]
    pub inplace: InPlaceChoice,
    /// Source of per-rank inputs.
    #[arg(long, value_enum, default_value_t = InputChoice::Ramp)]
    pub inputs: InputChoice,
    /// Seed for random and sampled inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random input sets per case with `--inputs random`.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Allowed ULP distance for float sums and products (default 4*ceil(log2 P)).
    #[arg(long)]
    pub ulp_threshold: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write reports here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn input_source(&self) -> InputSource {
        match self.inputs {
            InputChoice::Ramp => InputSource::Ramp,
            InputChoice::Smalldomain => InputSource::SmallDomain {
                values: vec![-1, 0, 1],
                limit: collsim_core::verify::SMALL_DOMAIN_LIMIT,
                seed: self.seed,
            },
            InputChoice::Random => InputSource::random(self.seed, self.trials),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value_t = AlgChoice::Rd)]
    pub alg: AlgChoice,
    #[arg(long, default_value_t = 1)]
    pub p_min: usize,
    #[arg(long, default_value_t = 10)]
    pub p_max: usize,
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    /// Comma-separated operators (sum, prod, min, max).
    #[arg(long, value_delimiter = ',', default_value = "sum,prod,min,max")]
    pub ops: Vec<ReduceOp>,
    /// Comma-separated datatypes (i32, i64, f64, rational).
    #[arg(long, value_delimiter = ',', default_value = "i64,rational")]
    pub dtypes: Vec<Datatype>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    #[arg(long, value_enum, default_value_t = AlgChoice::Rd)]
    pub alg: AlgChoice,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "sum")]
    pub op: ReduceOp,
    #[arg(long, default_value = "i64")]
    pub dtype: Datatype,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExploreArgs {
    #[arg(long, value_enum, default_value_t = AlgChoice::All)]
    pub alg: AlgChoice,
    #[arg(long, default_value_t = 1)]
    pub p_min: usize,
    #[arg(long, default_value_t = 4)]
    pub p_max: usize,
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 2)]
    pub n_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "sum")]
    pub ops: Vec<ReduceOp>,
    #[arg(long, value_delimiter = ',', default_value = "i64")]
    pub dtypes: Vec<Datatype>,
    /// Random schedules per case. Without it, cases with p <= 4 and n <= 2
    /// are explored exhaustively and larger ones with 100 seeds.
    #[arg(long, conflicts_with = "exhaustive")]
    pub seeds: Option<u64>,
    /// Enumerate every schedule regardless of case size.
    #[arg(long)]
    pub exhaustive: bool,
    /// Longest schedule, in scheduler steps, followed by exhaustive search.
    #[arg(long, default_value_t = ExploreConfig::default().max_depth)]
    pub schedule_bound: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[arg(long, value_enum, default_value_t = TraceAlg::Rd)]
    pub alg: TraceAlg,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "sum")]
    pub op: ReduceOp,
    #[arg(long, default_value = "i64")]
    pub dtype: Datatype,
    #[arg(long, value_enum, default_value_t = SendChoice::Buffered)]
    pub mode: SendChoice,
    /// Call the algorithm in place.
    #[arg(long)]
    pub inplace: bool,
    /// Pick runnable ranks at random with this seed instead of lowest first.
    #[arg(long)]
    pub schedule_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceAlg {
    Rd,
    Rsag,
}

/// An argument combination clap accepts but the harness cannot run.
#[derive(Debug, PartialEq, Eq)]
pub struct UsageError(pub String);

fn check_range(name: &str, lo: usize, hi: usize, min: usize, max: usize) -> Result<(), UsageError> {
    if lo < min || hi > max || lo > hi {
        return Err(UsageError(format!(
            "invalid {name} range {lo}..={hi}: expected {min} <= min <= max <= {max}"
        )));
    }
    Ok(())
}

const MAX_COUNT: usize = 1 << 20;

impl GridArgs {
    fn validate(&self) -> Result<(), UsageError> {
        check_range("p", self.p_min, self.p_max, 1, MAX_RANKS)?;
        check_range("n", self.n_min, self.n_max, 0, MAX_COUNT)
    }
}

fn grid(
    algorithms: Vec<Algorithm>,
    p: (usize, usize),
    n: (usize, usize),
    ops: &[ReduceOp],
    dtypes: &[Datatype],
    common: &CommonArgs,
) -> SweepGrid {
    SweepGrid {
        algorithms,
        p: p.0..=p.1,
        n: n.0..=n.1,
        ops: ops.to_vec(),
        datatypes: dtypes.to_vec(),
        inputs: vec![common.input_source()],
        send_modes: vec![common.mode.into()],
        placements: common.inplace.placements(),
        op_limits: Vec::new(),
        policy: SchedulePolicy::LowestRank,
        ulp_threshold: common.ulp_threshold,
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(UsageError(msg))) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(UsageError),
    Io(io::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

pub fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Sweep(a) => {
            a.grid.validate()?;
            let g = grid(
                a.grid.alg.algorithms(),
                (a.grid.p_min, a.grid.p_max),
                (a.grid.n_min, a.grid.n_max),
                &a.grid.ops,
                &a.grid.dtypes,
                &a.common,
            );
            let result = collsim_core::verify::sweep(&g);
            emit(&result.reports, &a.common, cli.verbose)
        }
        Command::Case(a) => {
            check_range("p", a.p, a.p, 1, MAX_RANKS)?;
            check_range("n", a.n, a.n, 0, MAX_COUNT)?;
            let g = grid(a.alg.algorithms(), (a.p, a.p), (a.n, a.n), &[a.op], &[a.dtype], &a.common);
            let result = collsim_core::verify::sweep(&g);
            emit(&result.reports, &a.common, cli.verbose)
        }
        Command::Explore(a) => {
            check_range("p", a.p_min, a.p_max, 1, MAX_RANKS)?;
            check_range("n", a.n_min, a.n_max, 0, MAX_COUNT)?;
            let reports = explore_grid(a);
            emit(&reports, &a.common, cli.verbose)
        }
        Command::Trace(a) => trace(a),
    }
}

fn explore_grid(a: &ExploreArgs) -> Vec<VerificationReport> {
    let g = grid(
        a.alg.algorithms(),
        (a.p_min, a.p_max),
        (a.n_min, a.n_max),
        &a.ops,
        &a.dtypes,
        &a.common,
    );
    let mut specs = Vec::new();
    for cell in g.cells() {
        for set in generate(&cell.source, cell.p, cell.n, cell.datatype, cell.op) {
            let mut spec = CaseSpec::new(cell.algorithm, cell.p, cell.n, cell.op, cell.datatype)
                .with_inputs(set.label, set.buffers)
                .with_mode(cell.mode);
            spec.ulp_threshold = a.common.ulp_threshold;
            specs.push(spec);
        }
    }
    specs
        .par_iter()
        .map(|spec| {
            let bounded = ExploreStrategy::Exhaustive(ExploreConfig {
                max_depth: a.schedule_bound,
                ..ExploreConfig::default()
            });
            let strategy = match (a.seeds, a.exhaustive) {
                (Some(seeds), _) => ExploreStrategy::Sampled { seeds },
                (None, true) => bounded,
                (None, false) => match default_strategy(spec.p, spec.n) {
                    ExploreStrategy::Exhaustive(_) => bounded,
                    sampled => sampled,
                },
            };
            explore_schedules(spec, &strategy).compact()
        })
        .collect()
}

fn trace(a: &TraceArgs) -> Result<u8, Failure> {
    check_range("p", a.p, a.p, 1, MAX_RANKS)?;
    check_range("n", a.n, a.n, 0, MAX_COUNT)?;
    let algorithm = match a.alg {
        TraceAlg::Rd => Algorithm::RecursiveDoubling,
        TraceAlg::Rsag => Algorithm::ReduceScatterAllgather,
    };
    let placement = if a.inplace {
        Placement::InPlace
    } else {
        Placement::OutOfPlace
    };
    let policy = match a.schedule_seed {
        Some(seed) => SchedulePolicy::Random(seed),
        None => SchedulePolicy::LowestRank,
    };
    let spec = CaseSpec::new(algorithm, a.p, a.n, a.op, a.dtype)
        .with_mode(Mode::new(a.mode.into(), placement))
        .with_policy(policy);
    let (report, events) = trace_case(&spec);
    let mut text = format_trace(&events);
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    eprint!("{}", to_text(std::slice::from_ref(&report)));
    Ok(if report.passed() { EXIT_PASS } else { EXIT_FAIL })
}

/// Writes reports in the requested format plus the summary line. The
/// summary goes to standard error when standard output carries JSON or CSV.
fn emit(reports: &[VerificationReport], common: &CommonArgs, verbose: u8) -> Result<u8, Failure> {
    let summary = SweepSummary::from_reports(reports);
    let body = match common.format {
        Format::Json => to_json(reports) + "\n",
        Format::Csv => to_csv(reports),
        Format::Text => to_text(reports),
    };
    let machine = common.format != Format::Text;
    match &common.out {
        Some(path) => {
            fs::write(path, body)?;
            println!("{summary}");
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            if machine {
                eprintln!("{summary}");
            } else {
                writeln!(out, "{summary}")?;
            }
        }
    }
    if verbose > 1 {
        for r in reports.iter().filter(|r| !r.passed()) {
            if let Some(d) = &r.detail {
                eprintln!("{} p={} n={}: {d}", r.algorithm, r.p, r.n);
            }
        }
    }
    Ok(if summary.all_passed() { EXIT_PASS } else { EXIT_FAIL })
}
