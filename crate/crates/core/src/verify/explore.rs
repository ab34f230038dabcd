use crate::simnet::{self, ExploreConfig, ExploreFailure, SchedulePolicy};

use super::{evaluate, execute, CaseSpec, Outcome, VerificationReport};

/// How many interleavings of a case to examine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExploreStrategy {
    /// Every schedule, by stateful search.
    Exhaustive(ExploreConfig),
    /// One random schedule per seed in `0..seeds`.
    Sampled { seeds: u64 },
}

/// Exhaustive for `p <= 4` and `n <= 2`, otherwise 100 random schedules.
pub fn default_strategy(p: usize, n: usize) -> ExploreStrategy {
    if p <= 4 && n <= 2 {
        ExploreStrategy::Exhaustive(ExploreConfig::default())
    } else {
        ExploreStrategy::Sampled { seeds: 100 }
    }
}

/// Verifies `spec` under many schedules. Every schedule must terminate,
/// produce the same per-rank results, and agree with the oracle. The
/// schedule policy of `spec` is ignored.
pub fn explore_schedules(spec: &CaseSpec, strategy: &ExploreStrategy) -> VerificationReport {
    match strategy {
        ExploreStrategy::Sampled { seeds } => sampled(spec, *seeds),
        ExploreStrategy::Exhaustive(config) => exhaustive(spec, config),
    }
}

fn sampled(spec: &CaseSpec, seeds: u64) -> VerificationReport {
    let mut first: Option<(VerificationReport, Vec<super::RankResult>)> = None;
    for seed in 0..seeds.max(1) {
        let spec = spec.clone().with_policy(SchedulePolicy::Random(seed));
        let (mut report, results) = execute(&spec);
        report.schedules = seed + 1;
        if !report.passed() {
            return report;
        }
        let results = results.expect("passing runs have results");
        match &first {
            None => first = Some((report, results)),
            Some((_, reference)) if *reference != results => {
                report.fail(Outcome::Error, format!("schedule seed {seed} changed the per-rank results"));
                return report;
            }
            Some(_) => {}
        }
    }
    let (mut report, _) = first.expect("at least one seed runs");
    report.schedules = seeds.max(1);
    report
}

fn exhaustive(spec: &CaseSpec, config: &ExploreConfig) -> VerificationReport {
    let (mut report, _) = execute(spec);
    if !report.passed() {
        return report;
    }
    let exploration = match simnet::explore(spec.p, &spec.sim_config(), config, spec.program()) {
        Ok(e) => e,
        Err(e) => {
            report.fail(Outcome::Error, e.to_string());
            return report;
        }
    };
    report.schedules = u64::try_from(exploration.schedules).unwrap_or(u64::MAX);
    if let Some(failure) = exploration.failure {
        if let Some(s) = failure.schedule() {
            report.replay = Some(spec.replay_data(s.clone()));
        }
        match failure {
            ExploreFailure::Deadlock { report: d, .. } => report.fail(Outcome::Deadlock, d.to_string()),
            ExploreFailure::Failed { rank, error, .. } => {
                report.fail(Outcome::Error, format!("rank {rank}: {error}"))
            }
            ExploreFailure::Divergent { .. } => {
                report.fail(Outcome::Error, "schedules disagree on per-rank results")
            }
            ExploreFailure::DepthBound { bound, .. } => {
                report.fail(Outcome::Error, format!("schedule longer than {bound} steps"))
            }
            ExploreFailure::StateBudget { states } => {
                report.fail(Outcome::Error, format!("state budget of {states} exhausted"))
            }
        }
        return report;
    }
    match exploration.results {
        Some(results) => {
            if let Some(reference) = exploration.reference {
                report.replay = Some(spec.replay_data(reference));
            }
            report.ulp_max = None;
            report.ulp_mean = None;
            evaluate(spec, &results, &mut report);
        }
        None => report.fail(Outcome::Error, "no schedule completed"),
    }
    report
}
