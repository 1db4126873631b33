use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AnnotatorResponse, ConsensusAnswer, ConsensusOutcome, ConsensusRecord, Provenance};
use crate::data::PerturbationKind;

/// Percentages over answerable-consensus tasks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftShare {
    pub original: f64,
    pub baseline: f64,
    pub random: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KindRatio {
    pub tasks: u64,
    pub unanswerable: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub responses: u64,
    /// Response counts per confidence level 1..5, split by the worker's
    /// answerability judgement.
    pub confidence_answerable: [u64; 5],
    pub confidence_unanswerable: [u64; 5],
    /// Tasks keyed by `"<majority size>/<responses>"`.
    pub agreement: BTreeMap<String, u64>,
    pub consensus: BTreeMap<String, u64>,
    /// Rows R1..R4, columns A1..A3, over unanswerable responses.
    pub interplay: [[u64; 3]; 4],
    pub reason_counts: [u64; 4],
    /// Consensus answer counts in original, baseline, random order.
    pub shift_counts: [u64; 3],
    pub shift: ShiftShare,
    pub by_kind: BTreeMap<PerturbationKind, KindRatio>,
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

pub fn analytics(
    responses: &[AnnotatorResponse],
    consensus: &[ConsensusRecord],
    kinds: &HashMap<String, PerturbationKind>,
) -> AnalyticsReport {
    let mut r = AnalyticsReport { responses: responses.len() as u64, ..Default::default() };
    for resp in responses {
        let level = (resp.confidence.clamp(1, 5) - 1) as usize;
        if resp.answerable {
            r.confidence_answerable[level] += 1;
        } else {
            r.confidence_unanswerable[level] += 1;
            if let Some(reason) = resp.reason {
                r.reason_counts[reason.index()] += 1;
                if let Some(a) = resp.unanswerable_answer {
                    r.interplay[reason.index()][a.index()] += 1;
                }
            }
        }
    }
    for c in consensus {
        let v = c.label.votes;
        let key = format!("{}/{}", v.answerable.max(v.unanswerable), v.total());
        *r.agreement.entry(key).or_default() += 1;
        *r.consensus.entry(c.label.label.as_str().to_string()).or_default() += 1;
        if let (ConsensusOutcome::Answerable, Some(ConsensusAnswer::Answerable(p))) = (c.label.label, c.answer) {
            r.shift_counts[p.index()] += 1;
        }
        if let Some(kind) = kinds.get(&c.label.task_id) {
            let e = r.by_kind.entry(*kind).or_default();
            e.tasks += 1;
            if c.label.label == ConsensusOutcome::Unanswerable {
                e.unanswerable += 1;
            }
        }
    }
    for e in r.by_kind.values_mut() {
        e.ratio = if e.tasks == 0 { 0.0 } else { e.unanswerable as f64 / e.tasks as f64 };
    }
    let total: u64 = r.shift_counts.iter().sum();
    r.shift = ShiftShare {
        original: pct(r.shift_counts[Provenance::Original.index()], total),
        baseline: pct(r.shift_counts[Provenance::Baseline.index()], total),
        random: pct(r.shift_counts[Provenance::Random.index()], total),
    };
    r
}
