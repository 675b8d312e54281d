//! The `qtrace v1` text format.
//!
//! ```text
//! # qtrace v1
//! B 2
//! p 0 1 2 3/4      # id release deadline weight
//! ```
//!
//! One directive per line; `#` starts a comment. Weights may be integers,
//! decimals or `num/den`.

use std::fmt::Write as _;

use crate::model::{validate_trace, RawPacket, RawTrace, Trace, TraceError};
use crate::weight::Weight;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `B <size>` directive")]
    MissingBufferSize,
    #[error("invalid trace: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<TraceError>),
}

pub fn parse_trace(text: &str) -> Result<Trace, FormatError> {
    let mut buffer_size = None;
    let mut packets = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let syntax = |message: String| FormatError::Syntax { line: line_no, message };
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let int = |s: &str, what: &str| {
            s.parse::<i64>()
                .map_err(|_| syntax(format!("{what} `{s}` is not an integer")))
        };
        match fields[0] {
            "B" => {
                if fields.len() != 2 {
                    return Err(syntax("expected `B <size>`".into()));
                }
                if buffer_size.is_some() {
                    return Err(syntax("buffer size given twice".into()));
                }
                buffer_size = Some(int(fields[1], "buffer size")?);
            }
            "p" => {
                if fields.len() != 5 {
                    return Err(syntax("expected `p <id> <release> <deadline> <weight>`".into()));
                }
                let weight: Weight = fields[4].parse().map_err(|e| syntax(format!("{e}")))?;
                packets.push(RawPacket {
                    id: int(fields[1], "id")?,
                    release: int(fields[2], "release")?,
                    deadline: int(fields[3], "deadline")?,
                    weight,
                });
            }
            other => return Err(syntax(format!("unknown directive `{other}`"))),
        }
    }
    let buffer_size = buffer_size.ok_or(FormatError::MissingBufferSize)?;
    validate_trace(RawTrace { buffer_size, packets }).map_err(FormatError::Invalid)
}

/// Canonical text for a trace; packets keep their trace order.
pub fn emit_trace(trace: &Trace) -> String {
    let mut out = String::from("# qtrace v1\n");
    let _ = writeln!(out, "B {}", trace.buffer_size());
    for p in trace.packets() {
        let _ = writeln!(out, "p {} {} {} {}", p.id, p.release, p.deadline, p.weight);
    }
    out
}
