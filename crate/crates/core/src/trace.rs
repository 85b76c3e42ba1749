//! Optional per-run search trace, written as JSON lines.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A rotation search node after its bound was computed.
    BnbNode {
        lo: f64,
        hi: f64,
        upper: usize,
        incumbent: usize,
        pruned: bool,
        terminal: bool,
    },
    /// The incumbent improved.
    BnbIncumbent { alpha: f64, cardinality: usize },
    /// One per-axis vote during translation search.
    Vote {
        axis: usize,
        hypotheses: usize,
        cells: usize,
        best: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Record into an optional trace without cluttering call sites.
pub(crate) fn record(trace: &mut Option<&mut Trace>, event: impl FnOnce() -> TraceEvent) {
    if let Some(t) = trace.as_deref_mut() {
        t.push(event());
    }
}
