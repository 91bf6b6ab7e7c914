//! Event trace and its digest.
//!
//! The digest is 64-bit FNV-1a over one line per processed event:
//!
//! ```text
//! {time}|{seq}|{kind}|{node}\n
//! ```
//!
//! `time` uses Rust's shortest round-trip decimal rendering of `f64`
//! (`0`, `12.5`, `1e-7`), `seq` and `node` are unsigned decimals and `kind`
//! is one of `arrival`, `service_start`, `service_end`, `session_step`.
//! The digest is printed as 16 lowercase hex digits.

use std::fmt::Write as _;

use crate::fabric::fnv1a;
use crate::topology::NodeId;

use super::event::{EventKind, SimEvent};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub node: NodeId,
}

impl From<&SimEvent> for TraceEntry {
    fn from(e: &SimEvent) -> Self {
        TraceEntry {
            time: e.time,
            seq: e.seq,
            kind: e.kind,
            node: e.node,
        }
    }
}

impl TraceEntry {
    pub fn canonical_line(&self) -> String {
        format!("{}|{}|{}|{}\n", self.time, self.seq, self.kind, self.node)
    }
}

/// Incremental digest over trace lines.
#[derive(Debug, Clone)]
pub struct TraceDigest {
    hash: u64,
    line: String,
}

impl Default for TraceDigest {
    fn default() -> Self {
        TraceDigest {
            hash: FNV_OFFSET,
            line: String::with_capacity(64),
        }
    }
}

impl TraceDigest {
    pub fn push(&mut self, e: &TraceEntry) {
        self.line.clear();
        let _ = writeln!(self.line, "{}|{}|{}|{}", e.time, e.seq, e.kind, e.node);
        self.hash = fnv1a(self.line.as_bytes(), self.hash);
    }

    pub fn value(&self) -> u64 {
        self.hash
    }
}

/// Digest of a complete trace.
pub fn digest_of<'a>(entries: impl IntoIterator<Item = &'a TraceEntry>) -> u64 {
    let mut d = TraceDigest::default();
    for e in entries {
        d.push(e);
    }
    d.value()
}

pub fn format_digest(d: u64) -> String {
    format!("{d:016x}")
}
