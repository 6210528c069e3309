use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Variant};
use crate::habits::ActionToken;
use crate::taskgen::{ChunkOrder, Condition, Kind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Training,
    Budget,
    Ambiguous,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Training => "training",
            Experiment::Budget => "budget",
            Experiment::Ambiguous => "ambiguous",
        })
    }
}

/// One planning episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: Experiment,
    pub condition: Condition,
    pub variant: Variant,
    pub seed: u64,
    /// Position within the stream.
    pub trial: usize,
    pub problem_id: String,
    pub kind: Kind,
    pub complexity: u32,
    /// Node budget, or the hard cap for flexible-budget trials.
    pub budget: u32,
    pub solved: bool,
    pub nodes_evaluated: u32,
    pub used_chunk: bool,
    pub chunk_lengths: Vec<usize>,
    pub plan_tokens: Vec<ActionToken>,
    pub hit_cap: bool,
    /// Chunk order of the solution (ambiguous trials only).
    pub chunk_order: Option<ChunkOrder>,
    /// Share of the certified solutions that keep the chunk order.
    pub chance_share: Option<f64>,
}

pub const CSV_HEADER: [&str; 18] = [
    "experiment",
    "condition",
    "variant",
    "seed",
    "trial",
    "problem_id",
    "kind",
    "complexity",
    "budget",
    "solved",
    "nodes_evaluated",
    "used_chunk",
    "chunk_lengths",
    "plan_tokens",
    "hit_cap",
    "chunk_order",
    "chance_share",
    "plan_length",
];

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Chunky => "chunky",
        Kind::Random => "random",
        Kind::Ambiguous => "ambiguous",
    }
}

fn order_name(o: ChunkOrder) -> &'static str {
    match o {
        ChunkOrder::Preserved => "preserved",
        ChunkOrder::Reordered => "reordered",
        ChunkOrder::Absent => "absent",
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl TrialRecord {
    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.experiment.to_string(),
            self.condition.to_string(),
            self.variant.to_string(),
            self.seed.to_string(),
            self.trial.to_string(),
            self.problem_id.clone(),
            kind_name(self.kind).into(),
            self.complexity.to_string(),
            self.budget.to_string(),
            self.solved.to_string(),
            self.nodes_evaluated.to_string(),
            self.used_chunk.to_string(),
            join(&self.chunk_lengths),
            join(&self.plan_tokens),
            self.hit_cap.to_string(),
            self.chunk_order.map(order_name).unwrap_or("").into(),
            self.chance_share
                .map(|s| format!("{s:.6}"))
                .unwrap_or_default(),
            self.plan_tokens.len().to_string(),
        ]
    }
}

/// One header row then one row per record, RFC 4180 quoting.
pub fn write_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let io = |e: csv::Error| HarnessError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record(r.csv_fields()).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[TrialRecord]) -> Result<(), HarnessError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| HarnessError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Io(format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}
