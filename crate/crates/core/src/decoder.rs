//! Turns predicted rolls into note events: temporal Gaussian smoothing,
//! non-maximum suppression along time, inclusive thresholding, and a
//! constant time shift.
//!
//! All three stages operate on each key row independently, so the work
//! parallelizes across rows without changing any result.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::midi::{NoteEvent, NoteSequence, PITCH_MIN};
use crate::roll::PianoRoll;

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("bad decoder parameter: {0}")]
    Param(String),
    #[error("roll shapes differ: {a} vs {b}")]
    Shape { a: String, b: String },
}

/// Peak-picking knobs. Defaults are the cross-validated operating point:
/// smoothing std 1 frame, threshold 0.74, shift −10 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoderParams {
    /// Standard deviation of the temporal smoothing kernel, in frames.
    pub sigma: f64,
    /// Inclusive detection threshold on smoothed, suppressed cells.
    pub rho: f64,
    /// Constant shift added to every event time, in seconds.
    pub mu: f64,
}

impl Default for DecoderParams {
    fn default() -> Self {
        Self { sigma: 1.0, rho: 0.74, mu: -0.01 }
    }
}

impl DecoderParams {
    pub fn check(&self) -> Result<(), DecoderError> {
        if !(self.sigma >= 0.0) {
            return Err(DecoderError::Param(format!("sigma {} must be >= 0", self.sigma)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(DecoderError::Param(format!("rho {} outside (0, 1)", self.rho)));
        }
        if !self.mu.is_finite() {
            return Err(DecoderError::Param(format!("mu {} not finite", self.mu)));
        }
        Ok(())
    }
}

/// One decoded note: MIDI pitch, normalized velocity, onset time in
/// seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredNote {
    pub pitch: u8,
    pub velocity: f64,
    pub time: f64,
}

/// Decoded events, sorted by time then pitch, all times nonnegative.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScorePrediction {
    pub events: Vec<ScoredNote>,
}

impl ScorePrediction {
    /// Expands events into a note sequence by giving every event a fixed
    /// length, for writing to note-table or MIDI outputs.
    pub fn to_note_sequence(&self, note_length: f64) -> NoteSequence {
        let notes: Vec<NoteEvent> = self
            .events
            .iter()
            .map(|e| NoteEvent {
                onset: e.time,
                offset: e.time + note_length,
                pitch: e.pitch,
                velocity: e.velocity,
            })
            .collect();
        let duration = notes.iter().map(|n| n.offset).fold(0.0, f64::max);
        NoteSequence::from_parts(notes, Vec::new(), duration)
            .expect("fixed-length events always form a valid sequence")
    }
}

/// Normalized Gaussian taps for std `sigma`, truncated at
/// `±ceil(3 sigma)` and renormalized to sum 1. Empty for `sigma == 0`
/// (identity).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return Vec::new();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Convolves each key row with the truncated Gaussian, zero-padding at
/// the boundaries (so constant rows stay constant in the interior and
/// taper at the edges). `sigma == 0` returns the roll unchanged.
pub fn gaussian_smooth(roll: &PianoRoll, sigma: f64) -> Result<PianoRoll, DecoderError> {
    if !(sigma >= 0.0) {
        return Err(DecoderError::Param(format!("sigma {} must be >= 0", sigma)));
    }
    if sigma == 0.0 {
        return Ok(roll.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let frames = roll.frames();
    let mut out = Matrix::zeros(roll.keys(), frames);
    let src = roll.matrix();
    out.data_mut()
        .par_chunks_mut(frames)
        .enumerate()
        .for_each(|(k, row)| {
            for (t, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, tap) in taps.iter().enumerate() {
                    let s = t as i64 + (i as i64 - radius);
                    if s >= 0 && (s as usize) < frames {
                        acc += tap * src.get(k, s as usize);
                    }
                }
                *cell = acc;
            }
        });
    Ok(PianoRoll::from_matrix(roll.kind(), roll.delta_t(), out))
}

/// Non-maximum suppression along time: zeroes every cell strictly smaller
/// than either temporal neighbor. Boundary frames compare only against
/// the neighbor they have; plateaus survive.
pub fn nms(roll: &PianoRoll) -> PianoRoll {
    let frames = roll.frames();
    let mut out = roll.matrix().clone();
    let src = roll.matrix();
    out.data_mut()
        .par_chunks_mut(frames)
        .enumerate()
        .for_each(|(k, row)| {
            for (t, cell) in row.iter_mut().enumerate() {
                let v = src.get(k, t);
                let below_prev = t > 0 && v < src.get(k, t - 1);
                let below_next = t + 1 < frames && v < src.get(k, t + 1);
                if below_prev || below_next {
                    *cell = 0.0;
                }
            }
        });
    PianoRoll::from_matrix(roll.kind(), roll.delta_t(), out)
}

/// Cells surviving smooth → suppress → inclusive threshold, as
/// `(key, frame)` pairs in row-major order.
pub fn pick_onsets(
    roll: &PianoRoll,
    params: &DecoderParams,
) -> Result<Vec<(usize, usize)>, DecoderError> {
    params.check()?;
    let suppressed = nms(&gaussian_smooth(roll, params.sigma)?);
    let mut picks = Vec::new();
    for k in 0..suppressed.keys() {
        for t in 0..suppressed.frames() {
            if suppressed.get(k, t) >= params.rho {
                picks.push((k, t));
            }
        }
    }
    Ok(picks)
}

/// Full decode: pick onsets from the onset roll, read each event's
/// velocity from the velocity roll at the same cell, place it at
/// `max(0, delta_t * frame + mu)` seconds.
pub fn decode(
    onset_roll: &PianoRoll,
    velocity_roll: &PianoRoll,
    params: &DecoderParams,
) -> Result<ScorePrediction, DecoderError> {
    params.check()?;
    if onset_roll.keys() != velocity_roll.keys()
        || onset_roll.frames() != velocity_roll.frames()
    {
        return Err(DecoderError::Shape {
            a: format!("{}x{}", onset_roll.keys(), onset_roll.frames()),
            b: format!("{}x{}", velocity_roll.keys(), velocity_roll.frames()),
        });
    }
    let delta_t = onset_roll.delta_t();
    let mut events: Vec<ScoredNote> = pick_onsets(onset_roll, params)?
        .into_iter()
        .map(|(k, t)| ScoredNote {
            pitch: PITCH_MIN + k as u8,
            velocity: velocity_roll.get(k, t),
            time: (delta_t * t as f64 + params.mu).max(0.0),
        })
        .collect();
    events.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .expect("event times are finite")
            .then(a.pitch.cmp(&b.pitch))
    });
    Ok(ScorePrediction { events })
}
