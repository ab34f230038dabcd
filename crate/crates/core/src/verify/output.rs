//! Report serialisation: a JSON array, CSV with one row per report, and
//! human-readable lines. CSV rows omit replay data.

use serde::{Deserialize, Serialize};

use super::{Algorithm, Mismatch, Mode, Outcome, VerificationReport};
use crate::value::{Datatype, ReduceOp};

pub const CSV_COLUMNS: [&str; 18] = [
    "algorithm",
    "p",
    "n",
    "op",
    "datatype",
    "mode",
    "inputs",
    "outcome",
    "mismatch_rank",
    "mismatch_index",
    "expected",
    "actual",
    "mismatch_ulp",
    "ulp_max",
    "ulp_mean",
    "messages",
    "schedules",
    "detail",
];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    algorithm: Algorithm,
    p: usize,
    n: usize,
    op: ReduceOp,
    datatype: Datatype,
    mode: Mode,
    inputs: String,
    outcome: Outcome,
    mismatch_rank: Option<usize>,
    mismatch_index: Option<usize>,
    expected: Option<String>,
    actual: Option<String>,
    mismatch_ulp: Option<u64>,
    ulp_max: Option<u64>,
    ulp_mean: Option<f64>,
    messages: u64,
    schedules: u64,
    detail: Option<String>,
}

impl From<&VerificationReport> for Row {
    fn from(r: &VerificationReport) -> Row {
        let m = r.first_mismatch.as_ref();
        Row {
            algorithm: r.algorithm,
            p: r.p,
            n: r.n,
            op: r.op,
            datatype: r.datatype,
            mode: r.mode,
            inputs: r.inputs.clone(),
            outcome: r.outcome,
            mismatch_rank: m.map(|m| m.rank),
            mismatch_index: m.map(|m| m.index),
            expected: m.map(|m| m.expected.clone()),
            actual: m.map(|m| m.actual.clone()),
            mismatch_ulp: m.and_then(|m| m.ulp),
            ulp_max: r.ulp_max,
            ulp_mean: r.ulp_mean,
            messages: r.messages,
            schedules: r.schedules,
            detail: r.detail.clone(),
        }
    }
}

impl From<Row> for VerificationReport {
    fn from(row: Row) -> VerificationReport {
        let first_mismatch = match (row.mismatch_rank, row.mismatch_index) {
            (Some(rank), Some(index)) => Some(Mismatch {
                rank,
                index,
                expected: row.expected.unwrap_or_default(),
                actual: row.actual.unwrap_or_default(),
                ulp: row.mismatch_ulp,
            }),
            _ => None,
        };
        VerificationReport {
            algorithm: row.algorithm,
            p: row.p,
            n: row.n,
            op: row.op,
            datatype: row.datatype,
            mode: row.mode,
            inputs: row.inputs,
            outcome: row.outcome,
            first_mismatch,
            ulp_max: row.ulp_max,
            ulp_mean: row.ulp_mean,
            messages: row.messages,
            schedules: row.schedules,
            detail: row.detail,
            replay: None,
        }
    }
}

pub fn to_json(reports: &[VerificationReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialise")
}

pub fn parse_json(s: &str) -> Result<Vec<VerificationReport>, serde_json::Error> {
    serde_json::from_str(s)
}

pub fn to_csv(reports: &[VerificationReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(Row::from(r)).expect("rows serialise");
    }
    if reports.is_empty() {
        w.write_record(CSV_COLUMNS).expect("header writes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn parse_csv(s: &str) -> Result<Vec<VerificationReport>, csv::Error> {
    csv::Reader::from_reader(s.as_bytes())
        .deserialize::<Row>()
        .map(|row| row.map(VerificationReport::from))
        .collect()
}

/// One line per report.
pub fn to_text(reports: &[VerificationReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!(
            "{:<8} {:<4} p={:<2} n={:<2} {:<4} {:<8} {:<22} {:<16} msgs={} schedules={}",
            r.outcome.to_string().to_uppercase(),
            r.algorithm,
            r.p,
            r.n,
            r.op.short_name(),
            r.datatype.short_name(),
            r.mode,
            r.inputs,
            r.messages,
            r.schedules,
        ));
        if let Some(u) = r.ulp_max {
            out.push_str(&format!(" ulp_max={u}"));
        }
        if let Some(m) = &r.first_mismatch {
            out.push_str(&format!(" [{m}]"));
        }
        if let Some(d) = &r.detail {
            if r.first_mismatch.is_none() {
                out.push_str(&format!(" [{}]", d.lines().next().unwrap_or_default()));
            }
        }
        out.push('\n');
    }
    out
}
