//! Summary metrics over trial records, as used by the acceptance checks.

use mcts_habits::harness::{TrialRecord, Variant};
use mcts_habits::taskgen::{ChunkOrder, Kind};

/// Arithmetic mean; NaN when empty.
pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn of(records: &[TrialRecord], v: Variant) -> impl Iterator<Item = &TrialRecord> {
    records.iter().filter(move |r| r.variant == v)
}

/// Share of trials solved.
pub fn success<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> f64 {
    mean(records.map(|r| r.solved as u8 as f64))
}

/// Share of solved chunky trials whose plan contains a chunk edge.
pub fn chunk_use<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> f64 {
    mean(
        records
            .filter(|r| r.kind == Kind::Chunky && r.solved)
            .map(|r| r.used_chunk as u8 as f64),
    )
}

/// Share of solved trials whose solution keeps the chunk order.
pub fn preserved<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> f64 {
    mean(
        records
            .filter(|r| r.solved)
            .map(|r| (r.chunk_order == Some(ChunkOrder::Preserved)) as u8 as f64),
    )
}

/// Seeds, in first-seen order.
pub fn seeds(records: &[TrialRecord]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for r in records {
        if !out.contains(&r.seed) {
            out.push(r.seed);
        }
    }
    out
}

/// Largest minus smallest value.
pub fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}
