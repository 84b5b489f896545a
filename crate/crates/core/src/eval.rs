//! Transcription scoring: note matching with onset (and optional
//! velocity) tolerances, precision/recall/F1 reports, score-alignment
//! error rates, and corpus-level aggregation.
//!
//! Matching is maximum-cardinality bipartite matching found with
//! augmenting paths — never greedy — so two near-simultaneous notes
//! cannot shadow each other. Tolerance comparisons are inclusive.

use serde::Serialize;
use thiserror::Error;

use crate::decoder::{ScoredNote, ScorePrediction};
use crate::midi::NoteSequence;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bad matching config: {0}")]
    Config(String),
    #[error("reference is empty: {0}")]
    EmptyReference(String),
    #[error("nothing to aggregate: {0}")]
    EmptyCorpus(String),
}

/// Matching tolerances. Defaults: onsets within 50 ms, velocities within
/// 0.1 (only enforced when `require_velocity` is set), pitches equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchConfig {
    pub onset_tolerance: f64,
    pub velocity_tolerance: f64,
    pub require_velocity: bool,
    pub require_pitch_equal: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            onset_tolerance: 0.050,
            velocity_tolerance: 0.1,
            require_velocity: false,
            require_pitch_equal: true,
        }
    }
}

impl MatchConfig {
    pub fn check(&self) -> Result<(), EvalError> {
        if !(self.onset_tolerance > 0.0) {
            return Err(EvalError::Config(format!(
                "onset tolerance {} must be positive",
                self.onset_tolerance
            )));
        }
        if !(self.velocity_tolerance > 0.0) {
            return Err(EvalError::Config(format!(
                "velocity tolerance {} must be positive",
                self.velocity_tolerance
            )));
        }
        Ok(())
    }
}

/// Precision/recall/F1 with the underlying counts. `zero_denominator`
/// flags reports where an empty side forced a metric to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub ref_count: usize,
    pub est_count: usize,
    pub zero_denominator: bool,
}

/// Alignment error rates relative to the reference note count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentStats {
    /// Time-matched notes with the wrong pitch, per reference note.
    pub substitution_rate: f64,
    /// Unmatched reference notes, per reference note.
    pub deletion_rate: f64,
    /// Unmatched estimated notes, per reference note.
    pub insertion_rate: f64,
    /// Exactly `substitution + deletion + insertion`.
    pub error_rate: f64,
    pub ref_count: usize,
    pub est_count: usize,
}

/// Views a note sequence as a sorted score (onset time, pitch, velocity)
/// for evaluation against another score.
pub fn score_from_sequence(seq: &NoteSequence) -> ScorePrediction {
    let mut events: Vec<ScoredNote> = seq
        .notes
        .iter()
        .map(|n| ScoredNote { pitch: n.pitch, velocity: n.velocity, time: n.onset })
        .collect();
    events.sort_by(|a, b| {
        a.time.partial_cmp(&b.time).expect("onsets are finite").then(a.pitch.cmp(&b.pitch))
    });
    ScorePrediction { events }
}

fn edge_allowed(r: &ScoredNote, e: &ScoredNote, cfg: &MatchConfig) -> bool {
    if cfg.require_pitch_equal && r.pitch != e.pitch {
        return false;
    }
    if (r.time - e.time).abs() > cfg.onset_tolerance {
        return false;
    }
    if cfg.require_velocity && (r.velocity - e.velocity).abs() > cfg.velocity_tolerance {
        return false;
    }
    true
}

/// Candidate estimate indices for each reference, in preference order:
/// equal pitch first (relevant only when pitch is not required), then
/// smaller onset distance, then index. The order picks which maximum
/// matching the augmenting-path search lands on, deterministically.
fn candidate_lists(
    reference: &[ScoredNote],
    estimate: &[ScoredNote],
    cfg: &MatchConfig,
) -> Vec<Vec<usize>> {
    reference
        .iter()
        .map(|r| {
            let mut cands: Vec<usize> = (0..estimate.len())
                .filter(|&j| edge_allowed(r, &estimate[j], cfg))
                .collect();
            cands.sort_by(|&a, &b| {
                let mism_a = (estimate[a].pitch != r.pitch) as u8;
                let mism_b = (estimate[b].pitch != r.pitch) as u8;
                mism_a
                    .cmp(&mism_b)
                    .then(
                        (estimate[a].time - r.time)
                            .abs()
                            .partial_cmp(&(estimate[b].time - r.time).abs())
                            .expect("onset distances are finite"),
                    )
                    .then(a.cmp(&b))
            });
            cands
        })
        .collect()
}

fn augment(
    i: usize,
    cands: &[Vec<usize>],
    est_owner: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for &j in &cands[i] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        if est_owner[j].is_none()
            || augment(est_owner[j].unwrap(), cands, est_owner, visited)
        {
            est_owner[j] = Some(i);
            return true;
        }
    }
    false
}

/// Maximum-cardinality matching between reference and estimated notes,
/// as `(ref_index, est_index)` pairs sorted by reference index.
pub fn match_notes(
    reference: &ScorePrediction,
    estimate: &ScorePrediction,
    cfg: &MatchConfig,
) -> Result<Vec<(usize, usize)>, EvalError> {
    cfg.check()?;
    let cands = candidate_lists(&reference.events, &estimate.events, cfg);
    let mut est_owner: Vec<Option<usize>> = vec![None; estimate.events.len()];
    for i in 0..reference.events.len() {
        let mut visited = vec![false; estimate.events.len()];
        augment(i, &cands, &mut est_owner, &mut visited);
    }
    let mut pairs: Vec<(usize, usize)> = est_owner
        .iter()
        .enumerate()
        .filter_map(|(j, owner)| owner.map(|i| (i, j)))
        .collect();
    pairs.sort();
    Ok(pairs)
}

/// Precision/recall/F1 from a matching size and the two note counts.
/// Empty sides yield 0 for the affected metric and set the flag.
pub fn prf(matched: usize, ref_count: usize, est_count: usize) -> EvalReport {
    let zero_denominator = ref_count == 0 || est_count == 0;
    let precision = if est_count > 0 { matched as f64 / est_count as f64 } else { 0.0 };
    let recall = if ref_count > 0 { matched as f64 / ref_count as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalReport {
        precision,
        recall,
        f1,
        matched,
        ref_count,
        est_count,
        zero_denominator,
    }
}

/// Onset-only score: pitch equal, onset within tolerance.
pub fn onset_eval(
    reference: &ScorePrediction,
    estimate: &ScorePrediction,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let cfg = MatchConfig { require_velocity: false, ..*cfg };
    let matching = match_notes(reference, estimate, &cfg)?;
    Ok(prf(matching.len(), reference.events.len(), estimate.events.len()))
}

/// Onset+velocity score: additionally requires velocity within
/// tolerance.
pub fn onset_velocity_eval(
    reference: &ScorePrediction,
    estimate: &ScorePrediction,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let cfg = MatchConfig { require_velocity: true, ..*cfg };
    let matching = match_notes(reference, estimate, &cfg)?;
    Ok(prf(matching.len(), reference.events.len(), estimate.events.len()))
}

/// Score-alignment error rates: notes are matched on time alone
/// (preferring equal-pitch pairs); matched pairs with differing pitch are
/// substitutions, unmatched references deletions, unmatched estimates
/// insertions, all relative to the reference count.
pub fn alignment_stats(
    reference: &ScorePrediction,
    estimate: &ScorePrediction,
    cfg: &MatchConfig,
) -> Result<AlignmentStats, EvalError> {
    cfg.check()?;
    let ref_count = reference.events.len();
    if ref_count == 0 {
        return Err(EvalError::EmptyReference(
            "alignment rates are relative to the reference note count".into(),
        ));
    }
    let time_only = MatchConfig { require_pitch_equal: false, require_velocity: false, ..*cfg };
    let matching = match_notes(reference, estimate, &time_only)?;
    let substitutions = matching
        .iter()
        .filter(|&&(i, j)| reference.events[i].pitch != estimate.events[j].pitch)
        .count();
    let deletions = ref_count - matching.len();
    let insertions = estimate.events.len() - matching.len();
    let n = ref_count as f64;
    let substitution_rate = substitutions as f64 / n;
    let deletion_rate = deletions as f64 / n;
    let insertion_rate = insertions as f64 / n;
    Ok(AlignmentStats {
        substitution_rate,
        deletion_rate,
        insertion_rate,
        error_rate: substitution_rate + deletion_rate + insertion_rate,
        ref_count,
        est_count: estimate.events.len(),
    })
}

/// Median of already-collected values; even counts average the middle
/// pair.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median and mean of one metric across pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub median: f64,
    pub mean: f64,
}

fn summarize(mut values: Vec<f64>) -> MetricSummary {
    let mean = mean(&values);
    MetricSummary { median: median(&mut values), mean }
}

/// Corpus view of per-piece precision/recall/F1 reports. Each metric is
/// summarized independently — the median F1 is not derived from the
/// median precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusEvalSummary {
    pub pieces: usize,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
}

pub fn aggregate_reports(reports: &[EvalReport]) -> Result<CorpusEvalSummary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyCorpus("no evaluation reports".into()));
    }
    Ok(CorpusEvalSummary {
        pieces: reports.len(),
        precision: summarize(reports.iter().map(|r| r.precision).collect()),
        recall: summarize(reports.iter().map(|r| r.recall).collect()),
        f1: summarize(reports.iter().map(|r| r.f1).collect()),
    })
}

/// Corpus view of per-piece alignment stats; metrics are summarized
/// independently, so the median error rate need not equal the sum of the
/// other medians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusAlignmentSummary {
    pub pieces: usize,
    pub substitution_rate: MetricSummary,
    pub deletion_rate: MetricSummary,
    pub insertion_rate: MetricSummary,
    pub error_rate: MetricSummary,
}

pub fn aggregate_alignment(
    stats: &[AlignmentStats],
) -> Result<CorpusAlignmentSummary, EvalError> {
    if stats.is_empty() {
        return Err(EvalError::EmptyCorpus("no alignment stats".into()));
    }
    Ok(CorpusAlignmentSummary {
        pieces: stats.len(),
        substitution_rate: summarize(stats.iter().map(|s| s.substitution_rate).collect()),
        deletion_rate: summarize(stats.iter().map(|s| s.deletion_rate).collect()),
        insertion_rate: summarize(stats.iter().map(|s| s.insertion_rate).collect()),
        error_rate: summarize(stats.iter().map(|s| s.error_rate).collect()),
    })
}
