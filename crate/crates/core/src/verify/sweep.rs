use std::fmt;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simnet::{SchedulePolicy, SendMode};
use crate::value::{Datatype, ReduceOp};

use super::inputs::generate;
use super::{execute, Algorithm, CaseSpec, InputSource, Mode, Outcome, Placement, VerificationReport};

/// Upper bounds on `p` and `n` for one operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpLimit {
    pub op: ReduceOp,
    pub max_p: usize,
    pub max_n: usize,
}

/// The cartesian product of case parameters to verify.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    pub p: RangeInclusive<usize>,
    pub n: RangeInclusive<usize>,
    pub ops: Vec<ReduceOp>,
    pub datatypes: Vec<Datatype>,
    pub inputs: Vec<InputSource>,
    pub send_modes: Vec<SendMode>,
    pub placements: Vec<Placement>,
    pub op_limits: Vec<OpLimit>,
    pub policy: SchedulePolicy,
    pub ulp_threshold: Option<u64>,
}

impl Default for SweepGrid {
    /// Recursive doubling, `p, n` in `1..=10`, every operator, 64-bit
    /// integers and exact rationals, both placements, the `r + i` inputs.
    fn default() -> Self {
        SweepGrid {
            algorithms: vec![Algorithm::RecursiveDoubling],
            p: 1..=10,
            n: 1..=10,
            ops: ReduceOp::ALL.to_vec(),
            datatypes: vec![Datatype::Int64, Datatype::ExactRational],
            inputs: vec![InputSource::Ramp],
            send_modes: vec![SendMode::Buffered],
            placements: vec![Placement::OutOfPlace, Placement::InPlace],
            op_limits: Vec::new(),
            policy: SchedulePolicy::LowestRank,
            ulp_threshold: None,
        }
    }
}

impl SweepGrid {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        SweepGrid {
            algorithms: vec![algorithm],
            ..SweepGrid::default()
        }
    }

    /// Adds `trials` seeded random input sets per cell.
    pub fn with_random_trials(mut self, seed: u64, trials: usize) -> Self {
        self.inputs.push(InputSource::random(seed, trials));
        self
    }

    /// Caps Min and Max at `p, n <= 5`.
    pub fn narrow_min_max(mut self) -> Self {
        for op in [ReduceOp::Min, ReduceOp::Max] {
            self.op_limits.push(OpLimit { op, max_p: 5, max_n: 5 });
        }
        self
    }

    fn allowed(&self, op: ReduceOp, p: usize, n: usize) -> bool {
        self.op_limits
            .iter()
            .filter(|l| l.op == op)
            .all(|l| p <= l.max_p && n <= l.max_n)
    }

    /// Every case of the grid, one per combination of parameters and input
    /// source.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &datatype in &self.datatypes {
                for &op in &self.ops {
                    for p in self.p.clone() {
                        for n in self.n.clone() {
                            if !self.allowed(op, p, n) {
                                continue;
                            }
                            for &send in &self.send_modes {
                                for &placement in &self.placements {
                                    for source in &self.inputs {
                                        cells.push(Cell {
                                            algorithm,
                                            p,
                                            n,
                                            op,
                                            datatype,
                                            mode: Mode::new(send, placement),
                                            source: source.clone(),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One grid point: a case shape and the source of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub p: usize,
    pub n: usize,
    pub op: ReduceOp,
    pub datatype: Datatype,
    pub mode: Mode,
    pub source: InputSource,
}

/// Runs every input set of `cell`, one report per set. Passing reports
/// are compacted.
pub fn run_cell(cell: &Cell, policy: &SchedulePolicy, ulp_threshold: Option<u64>) -> Vec<VerificationReport> {
    generate(&cell.source, cell.p, cell.n, cell.datatype, cell.op)
        .into_iter()
        .map(|set| {
            let mut spec = CaseSpec::new(cell.algorithm, cell.p, cell.n, cell.op, cell.datatype)
                .with_inputs(set.label, set.buffers)
                .with_mode(cell.mode)
                .with_policy(policy.clone());
            spec.ulp_threshold = ulp_threshold;
            execute(&spec).0.compact()
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub total: usize,
    pub passed: usize,
    pub mismatches: usize,
    pub deadlocks: usize,
    pub errors: usize,
    pub ulp_max: Option<u64>,
}

impl SweepSummary {
    pub fn from_reports(reports: &[VerificationReport]) -> Self {
        let mut s = SweepSummary {
            total: reports.len(),
            ..Default::default()
        };
        for r in reports {
            match r.outcome {
                Outcome::Pass => s.passed += 1,
                Outcome::Mismatch => s.mismatches += 1,
                Outcome::Deadlock => s.deadlocks += 1,
                Outcome::Error => s.errors += 1,
            }
            if let Some(u) = r.ulp_max {
                s.ulp_max = Some(s.ulp_max.map_or(u, |m| m.max(u)));
            }
        }
        s
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} passed ({} mismatch, {} deadlock, {} error)",
            self.passed, self.total, self.mismatches, self.deadlocks, self.errors
        )?;
        if let Some(u) = self.ulp_max {
            write!(f, ", max ulp {u}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub reports: Vec<VerificationReport>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &VerificationReport> {
        self.reports.iter().filter(|r| !r.passed())
    }
}

/// Verifies every cell of `grid` in parallel. Reports come back in grid
/// order.
pub fn sweep(grid: &SweepGrid) -> SweepResult {
    let reports: Vec<VerificationReport> = grid
        .cells()
        .par_iter()
        .flat_map_iter(|cell| run_cell(cell, &grid.policy, grid.ulp_threshold))
        .collect();
    let summary = SweepSummary::from_reports(&reports);
    SweepResult { reports, summary }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let grid = SweepGrid::for_algorithm(Algorithm::RecursiveDoubling);
        // 2 datatypes x 4 ops x 100 shapes x 2 placements
        assert_eq!(grid.cells().len(), 8 * 100 * 2);
        assert_eq!(grid.clone().narrow_min_max().cells().len(), (4 * 100 + 4 * 25) * 2);
        assert_eq!(grid.with_random_trials(0, 5).cells().len(), 8 * 100 * 2 * 2);
    }

    #[test]
    fn small_sweep_passes() {
        let grid = SweepGrid {
            algorithms: Algorithm::ALL.to_vec(),
            p: 1..=5,
            n: 1..=3,
            inputs: vec![InputSource::Ramp, InputSource::random(1, 3)],
            ..SweepGrid::default()
        };
        let result = sweep(&grid);
        // 2 algorithms x 8 op/datatype pairs x 15 shapes x 2 placements x (1 + 3) input sets
        assert_eq!(result.reports.len(), 2 * 8 * 15 * 2 * 4);
        assert!(result.summary.all_passed(), "{:?}", result.failures().next());
        assert!(result.reports.iter().all(|r| r.replay.is_none()));
    }

    #[test]
    fn empty_ops_gives_empty_sweep() {
        let result = sweep(&SweepGrid {
            ops: Vec::new(),
            ..SweepGrid::default()
        });
        assert!(result.reports.is_empty());
        assert_eq!(result.summary.passed, 0);
        assert_eq!(result.summary.to_string(), "0/0 passed (0 mismatch, 0 deadlock, 0 error)");
    }
}
