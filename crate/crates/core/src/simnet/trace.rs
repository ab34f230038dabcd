use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    Send,
    Recv,
    SendrecvPost,
    ReduceLocal,
    Copy,
    Complete,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Send => "send",
            TraceKind::Recv => "recv",
            TraceKind::SendrecvPost => "sendrecv-post",
            TraceKind::ReduceLocal => "reduce-local",
            TraceKind::Copy => "copy",
            TraceKind::Complete => "complete",
        }
    }

    /// True for events that inject a message into the network.
    pub fn is_send(self) -> bool {
        matches!(self, TraceKind::Send | TraceKind::SendrecvPost)
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "send" => TraceKind::Send,
            "recv" => TraceKind::Recv,
            "sendrecv-post" => TraceKind::SendrecvPost,
            "reduce-local" => TraceKind::ReduceLocal,
            "copy" => TraceKind::Copy,
            "complete" => TraceKind::Complete,
            _ => return Err(format!("unknown trace kind {s:?}")),
        })
    }
}

/// One traced operation. `step` is the scheduler step during which the
/// event happened; `peer` and `tag` are absent for local operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub rank: usize,
    pub kind: TraceKind,
    pub peer: Option<usize>,
    pub tag: Option<u32>,
    pub count: usize,
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl fmt::Display for TraceEvent {
    /// `step rank kind peer tag count`, with `-` for an absent field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.step,
            self.rank,
            self.kind.as_str(),
            opt(&self.peer),
            opt(&self.tag),
            self.count
        )
    }
}

pub fn parse_trace_line(line: &str) -> Result<TraceEvent, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [step, rank, kind, peer, tag, count] = fields[..] else {
        return Err(format!("expected 6 fields, got {}", fields.len()));
    };
    fn num<T: FromStr>(s: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad number {s:?}"))
    }
    fn maybe<T: FromStr>(s: &str) -> Result<Option<T>, String> {
        if s == "-" {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    }
    Ok(TraceEvent {
        step: num(step)?,
        rank: num(rank)?,
        kind: kind.parse()?,
        peer: maybe(peer)?,
        tag: maybe(tag)?,
        count: num(count)?,
    })
}

/// Newline-delimited dump of `events`.
pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format_field_order() {
        let e = TraceEvent {
            step: 3,
            rank: 1,
            kind: TraceKind::SendrecvPost,
            peer: Some(0),
            tag: Some(14),
            count: 10,
        };
        assert_eq!(e.to_string(), "3 1 sendrecv-post 0 14 10");
        assert_eq!(parse_trace_line(&e.to_string()).unwrap(), e);

        let local = TraceEvent {
            kind: TraceKind::ReduceLocal,
            peer: None,
            tag: None,
            ..e
        };
        assert_eq!(local.to_string(), "3 1 reduce-local - - 10");
        assert_eq!(parse_trace_line("3 1 reduce-local - - 10").unwrap(), local);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_trace_line("1 2 send 3 4").is_err());
        assert!(parse_trace_line("1 2 jump 3 4 5").is_err());
        assert!(parse_trace_line("x 2 send 3 4 5").is_err());
    }
}
