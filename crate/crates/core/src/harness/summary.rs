use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Experiment, TrialRecord, Variant};
use crate::taskgen::{ChunkOrder, Condition, Kind};

/// Mean of one metric over a group of records with a normal-approximation
/// 95% confidence half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub condition: Condition,
    pub variant: Variant,
    pub kind: Kind,
    /// Trial position (training), budget (budget test), complexity bin or "all".
    pub bucket: String,
    pub metric: String,
    pub mean: f64,
    pub count: usize,
    pub ci95: f64,
}

type Key = (Experiment, Condition, Variant, Kind, String, String);

fn stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

fn metrics(r: &TrialRecord) -> Vec<(&'static str, f64)> {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    let mut m = vec![
        ("success", b(r.solved)),
        ("nodes_evaluated", r.nodes_evaluated as f64),
    ];
    if r.solved {
        m.push(("chunk_use", b(r.used_chunk)));
        if let Some(o) = r.chunk_order {
            m.push(("chunk_order_preserved", b(o == ChunkOrder::Preserved)));
        }
    }
    if let Some(s) = r.chance_share {
        m.push(("chance_share", s));
    }
    m
}

fn collect(groups: BTreeMap<Key, Vec<f64>>) -> Vec<SummaryRow> {
    groups
        .into_iter()
        .map(
            |((experiment, condition, variant, kind, bucket, metric), values)| {
                let (mean, ci95) = stats(&values);
                SummaryRow {
                    experiment,
                    condition,
                    variant,
                    kind,
                    bucket,
                    metric,
                    mean,
                    count: values.len(),
                    ci95,
                }
            },
        )
        .collect()
}

/// Per (experiment, condition, variant, kind, bucket, metric) summary. The
/// bucket is the trial position for training, the budget for budget tests
/// and "all" otherwise. Chunk-use and chunk-order metrics count solved
/// trials only.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in records {
        let bucket = match r.experiment {
            Experiment::Training => format!("{:02}", r.trial),
            Experiment::Budget => format!("{:03}", r.budget),
            Experiment::Ambiguous => "all".into(),
        };
        for (metric, v) in metrics(r) {
            groups
                .entry((
                    r.experiment,
                    r.condition,
                    r.variant,
                    r.kind,
                    bucket.clone(),
                    metric.into(),
                ))
                .or_default()
                .push(v);
        }
    }
    collect(groups)
}

/// Splits each (experiment, condition)'s distinct complexities into `bins`
/// equal-count ranges and summarises per range.
pub fn complexity_bins(records: &[TrialRecord], bins: usize) -> Vec<SummaryRow> {
    let bins = bins.max(1);
    let mut distinct: BTreeMap<(Experiment, Condition), Vec<u32>> = BTreeMap::new();
    for r in records {
        distinct
            .entry((r.experiment, r.condition))
            .or_default()
            .push(r.complexity);
    }
    let mut edges: BTreeMap<(Experiment, Condition), Vec<(u32, u32)>> = BTreeMap::new();
    for (k, mut c) in distinct {
        c.sort_unstable();
        c.dedup();
        let per = c.len().div_ceil(bins);
        edges.insert(
            k,
            c.chunks(per.max(1))
                .map(|w| (w[0], w[w.len() - 1]))
                .collect(),
        );
    }
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in records {
        let ranges = &edges[&(r.experiment, r.condition)];
        let (i, (lo, hi)) = ranges
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| (*lo..=*hi).contains(&r.complexity))
            .expect("complexity falls in a bin");
        let bucket = format!("bin{i}:{lo}-{hi}");
        for (metric, v) in metrics(r) {
            groups
                .entry((
                    r.experiment,
                    r.condition,
                    r.variant,
                    r.kind,
                    bucket.clone(),
                    metric.into(),
                ))
                .or_default()
                .push(v);
        }
    }
    collect(groups)
}
