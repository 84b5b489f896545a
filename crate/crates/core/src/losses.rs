//! Training objectives over piano rolls, with analytic gradients.
//!
//! Every loss is a sum (not a mean) of per-cell binary cross-entropy terms,
//! accumulated with compensated summation so the result is independent of
//! how the work might be split. Predictions are clamped to
//! `[eps, 1 - eps]` inside the logarithms only; stored rolls are never
//! modified. Gradients are with respect to the prediction cells and are
//! zero wherever a cell is clamped or masked out.

use serde::Serialize;
use thiserror::Error;

use crate::matrix::{KahanSum, Matrix};
use crate::midi::NoteSequence;
use crate::roll::{self, PianoRoll, RollConfig, RollError, PROLONG_SPAN};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("roll shapes differ in {what}: {a} vs {b}")]
    Shape { what: String, a: String, b: String },
    #[error("bad loss config: {0}")]
    Config(String),
    #[error("{0} requires an onset mask roll")]
    MissingMask(&'static str),
    #[error(transparent)]
    Roll(#[from] RollError),
}

/// Weighting and clamping knobs shared by all losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossConfig {
    /// Clamp inside logarithms; keeps every term finite.
    pub eps: f64,
    /// Multiplier on the first frames of each active run in the weighted
    /// frame loss.
    pub frame_weight: f64,
    /// Scale of the masked velocity term in the multi-task loss.
    pub lambda: f64,
    /// Notes are truncated to this length before building onset labels.
    pub onset_length: f64,
    /// How many frames from each run start count as "initial" and receive
    /// `frame_weight`.
    pub completion_frames: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            eps: 1e-7,
            frame_weight: 2.0,
            lambda: 1.0,
            onset_length: 0.032,
            completion_frames: PROLONG_SPAN,
        }
    }
}

impl LossConfig {
    pub fn check(&self) -> Result<(), LossError> {
        if !(self.eps > 0.0 && self.eps < 0.1) {
            return Err(LossError::Config(format!("eps {} outside (0, 0.1)", self.eps)));
        }
        if !(self.frame_weight >= 1.0) {
            return Err(LossError::Config(format!("frame_weight {} below 1", self.frame_weight)));
        }
        if !(self.lambda >= 0.0) {
            return Err(LossError::Config(format!("lambda {} negative", self.lambda)));
        }
        if !(self.onset_length > 0.0) {
            return Err(LossError::Config(format!(
                "onset_length {} not positive",
                self.onset_length
            )));
        }
        if self.completion_frames == 0 {
            return Err(LossError::Config("completion_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which objective `loss_value` / `loss_gradient` evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Plain summed binary cross-entropy.
    Bce,
    /// Frame loss without weighting (identical math to `Bce`; named for the
    /// CLI).
    FrameRaw,
    /// Frame loss with extra weight on the first frames of each run.
    FrameWeighted,
    /// Cross-entropy restricted to cells where the mask is active.
    VelocityMasked,
}

impl LossKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "bce" => Some(Self::Bce),
            "frame" => Some(Self::FrameRaw),
            "frame-weighted" => Some(Self::FrameWeighted),
            "velocity" => Some(Self::VelocityMasked),
            _ => None,
        }
    }
}

fn check_same_shape(what: &str, a: &PianoRoll, b: &PianoRoll) -> Result<(), LossError> {
    if a.keys() != b.keys() || a.frames() != b.frames() {
        return Err(LossError::Shape {
            what: what.into(),
            a: format!("{}x{}", a.keys(), a.frames()),
            b: format!("{}x{}", b.keys(), b.frames()),
        });
    }
    Ok(())
}

/// Per-cell multiplier implementing the kind-specific weighting:
/// ones for plain losses, run-start weights for the weighted frame loss,
/// and a 0/1 mask for the velocity loss.
fn weight_matrix(
    kind: LossKind,
    target: &PianoRoll,
    mask: Option<&PianoRoll>,
    cfg: &LossConfig,
) -> Result<Matrix, LossError> {
    let (keys, frames) = (target.keys(), target.frames());
    match kind {
        LossKind::Bce | LossKind::FrameRaw => Ok(Matrix::from_vec(
            keys,
            frames,
            vec![1.0; keys * frames],
        )),
        LossKind::FrameWeighted => {
            let mut w = Matrix::from_vec(keys, frames, vec![1.0; keys * frames]);
            for k in 0..keys {
                let mut t = 0;
                while t < frames {
                    if target.get(k, t) > 0.0 {
                        // run start: weight the first completion_frames
                        // frames, clamped to the run's extent
                        let mut end = t;
                        while end < frames && target.get(k, end) > 0.0 {
                            end += 1;
                        }
                        let boosted = (t + cfg.completion_frames).min(end);
                        for u in t..boosted {
                            w.set(k, u, cfg.frame_weight);
                        }
                        t = end;
                    } else {
                        t += 1;
                    }
                }
            }
            Ok(w)
        }
        LossKind::VelocityMasked => {
            let m = mask.ok_or(LossError::MissingMask("velocity loss"))?;
            check_same_shape("velocity mask", target, m)?;
            let mut w = Matrix::zeros(keys, frames);
            for k in 0..keys {
                for t in 0..frames {
                    if m.get(k, t) > 0.5 {
                        w.set(k, t, 1.0);
                    }
                }
            }
            Ok(w)
        }
    }
}

/// Weighted sum of per-cell cross-entropies:
/// `sum w * -(y ln p + (1 - y) ln(1 - p))` with `p` clamped inside the
/// logs.
pub fn loss_value(
    kind: LossKind,
    pred: &PianoRoll,
    target: &PianoRoll,
    mask: Option<&PianoRoll>,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    cfg.check()?;
    check_same_shape("loss", pred, target)?;
    let w = weight_matrix(kind, target, mask, cfg)?;
    let mut sum = KahanSum::default();
    for k in 0..pred.keys() {
        for t in 0..pred.frames() {
            let weight = w.get(k, t);
            if weight == 0.0 {
                continue;
            }
            let p = pred.get(k, t).clamp(cfg.eps, 1.0 - cfg.eps);
            let y = target.get(k, t);
            sum.add(weight * -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()));
        }
    }
    Ok(sum.value())
}

/// Analytic derivative of [`loss_value`] with respect to every prediction
/// cell: `w * (p - y) / (p (1 - p))` inside the clamp region, zero at
/// clamped or masked cells.
pub fn loss_gradient(
    kind: LossKind,
    pred: &PianoRoll,
    target: &PianoRoll,
    mask: Option<&PianoRoll>,
    cfg: &LossConfig,
) -> Result<Matrix, LossError> {
    cfg.check()?;
    check_same_shape("loss gradient", pred, target)?;
    let w = weight_matrix(kind, target, mask, cfg)?;
    let mut g = Matrix::zeros(pred.keys(), pred.frames());
    for k in 0..pred.keys() {
        for t in 0..pred.frames() {
            let weight = w.get(k, t);
            let p = pred.get(k, t);
            if weight == 0.0 || p < cfg.eps || p > 1.0 - cfg.eps {
                continue;
            }
            let y = target.get(k, t);
            g.set(k, t, weight * (p - y) / (p * (1.0 - p)));
        }
    }
    Ok(g)
}

/// Central finite differences of [`loss_value`], cell by cell — the
/// independent oracle for gradient verification.
pub fn finite_difference_gradient(
    kind: LossKind,
    pred: &PianoRoll,
    target: &PianoRoll,
    mask: Option<&PianoRoll>,
    cfg: &LossConfig,
    h: f64,
) -> Result<Matrix, LossError> {
    let mut g = Matrix::zeros(pred.keys(), pred.frames());
    let mut probe = pred.clone();
    for k in 0..pred.keys() {
        for t in 0..pred.frames() {
            let p = pred.get(k, t);
            probe.matrix_mut().set(k, t, p + h);
            let up = loss_value(kind, &probe, target, mask, cfg)?;
            probe.matrix_mut().set(k, t, p - h);
            let down = loss_value(kind, &probe, target, mask, cfg)?;
            probe.matrix_mut().set(k, t, p);
            g.set(k, t, (up - down) / (2.0 * h));
        }
    }
    Ok(g)
}

/// Largest relative disagreement between an analytic and a finite-difference
/// gradient, with a floor on the denominator for near-zero entries.
pub fn max_relative_gradient_error(analytic: &Matrix, fd: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for (a, f) in analytic.data().iter().zip(fd.data()) {
        let denom = a.abs().max(f.abs()).max(1e-6);
        worst = worst.max((a - f).abs() / denom);
    }
    worst
}

/// Plain summed cross-entropy between two rolls.
pub fn bce(pred: &PianoRoll, target: &PianoRoll, cfg: &LossConfig) -> Result<f64, LossError> {
    loss_value(LossKind::Bce, pred, target, None, cfg)
}

/// Builds the onset indicator for a sequence: notes truncated to
/// `cfg.onset_length`, then quantized — a truncated note activates the
/// frames its short span covers (typically two).
pub fn onset_indicator(
    seq: &NoteSequence,
    cfg: &LossConfig,
    delta_t: f64,
    frames: usize,
) -> Result<PianoRoll, LossError> {
    let clipped = roll::clip_note_lengths(seq, cfg.onset_length)?;
    let roll_cfg = RollConfig { delta_t, ..RollConfig::default() };
    let rolls = roll::quantize(&clipped, &roll_cfg, Some(frames))?;
    Ok(rolls.frames)
}

/// Cross-entropy of an onset prediction against the truncated-note
/// indicator derived from `seq`.
pub fn onset_loss(
    pred: &PianoRoll,
    seq: &NoteSequence,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    let indicator = onset_indicator(seq, cfg, pred.delta_t(), pred.frames())?;
    bce(pred, &indicator, cfg)
}

/// Frame loss, optionally with extra weight on the first
/// `cfg.completion_frames` frames of every active run.
pub fn frame_loss(
    pred: &PianoRoll,
    indicator: &PianoRoll,
    cfg: &LossConfig,
    weighted: bool,
) -> Result<f64, LossError> {
    let kind = if weighted { LossKind::FrameWeighted } else { LossKind::FrameRaw };
    loss_value(kind, pred, indicator, None, cfg)
}

/// Onset and frame components of the two-part training loss.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TotalLossBreakdown {
    pub onset: f64,
    pub frame: f64,
    pub total: f64,
}

/// Two-part objective: onset cross-entropy plus weighted frame
/// cross-entropy, reported separately and summed exactly.
pub fn total_loss(
    p_onset: &PianoRoll,
    p_frame: &PianoRoll,
    seq: &NoteSequence,
    cfg: &LossConfig,
) -> Result<TotalLossBreakdown, LossError> {
    let onset = onset_loss(p_onset, seq, cfg)?;
    let roll_cfg = RollConfig { delta_t: p_frame.delta_t(), ..RollConfig::default() };
    let labels = roll::quantize(seq, &roll_cfg, Some(p_frame.frames()))?;
    let frame = frame_loss(p_frame, &labels.frames, cfg, true)?;
    Ok(TotalLossBreakdown { onset, frame, total: onset + frame })
}

/// Cross-entropy between predicted and labeled velocities, restricted to
/// cells where the prolonged onset mask is active.
pub fn velocity_masked_loss(
    pred_velocity: &PianoRoll,
    label_velocity: &PianoRoll,
    onset_mask: &PianoRoll,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    loss_value(LossKind::VelocityMasked, pred_velocity, label_velocity, Some(onset_mask), cfg)
}

/// Per-term report of the multi-stage objective.
#[derive(Debug, Clone, Serialize)]
pub struct MultitaskBreakdown {
    /// One cross-entropy per onset stage, all against the same prolonged
    /// onset labels.
    pub stage_terms: Vec<f64>,
    /// Masked velocity cross-entropy before scaling.
    pub velocity_term: f64,
    pub lambda: f64,
    /// `sum(stage_terms) + lambda * velocity_term`.
    pub total: f64,
}

/// Multi-stage objective: each onset stage scored against the prolonged
/// onset labels, plus the scaled masked velocity term.
pub fn multitask_loss(
    stage_preds: &[PianoRoll],
    velocity_pred: &PianoRoll,
    onset_labels: &PianoRoll,
    velocity_labels: &PianoRoll,
    cfg: &LossConfig,
) -> Result<MultitaskBreakdown, LossError> {
    let mut stage_terms = Vec::with_capacity(stage_preds.len());
    let mut total = KahanSum::default();
    for pred in stage_preds {
        let term = bce(pred, onset_labels, cfg)?;
        stage_terms.push(term);
        total.add(term);
    }
    let velocity_term =
        velocity_masked_loss(velocity_pred, velocity_labels, onset_labels, cfg)?;
    total.add(cfg.lambda * velocity_term);
    Ok(MultitaskBreakdown { stage_terms, velocity_term, lambda: cfg.lambda, total: total.value() })
}
