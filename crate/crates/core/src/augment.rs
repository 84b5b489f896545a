//! Time-stretch and pitch-shift augmentation with matching label adjustment.
//!
//! Stretching runs a phase vocoder (2048-point frames, 512-sample synthesis
//! hop) with phase propagation from the actual analysis-frame spacing and an
//! identity-phase reset at transient frames, so attacks stay crisp. Pitch
//! shifting resamples by `1/beta` (raising the pitch) and stretches the
//! result back to the original length.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::frontend::{hann_window, sinc_resample};
use crate::midi::{NoteSequence, PITCH_MAX, PITCH_MIN};

const VOCODER_WINDOW: usize = 2048;
const VOCODER_HOP: usize = 512;
/// Spectral-flux ratio above which a frame counts as a transient.
const TRANSIENT_FLUX_RATIO: f64 = 2.0;

/// Recommended factor range; parameters outside degrade audibly.
pub const GUARD_RAIL_LO: f64 = 0.5;
pub const GUARD_RAIL_HI: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("bad augmentation parameter: {0}")]
    InvalidParam(String),
    #[error("{0}")]
    Label(String),
}

/// Stretch/shift factors. `alpha` scales duration, `beta` scales frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    /// The pitch shift expressed in equal-tempered semitones.
    pub fn semitones(&self) -> f64 {
        12.0 * self.beta.log2()
    }

    pub fn validate(&self, lo: f64, hi: f64) -> Result<(), AugmentError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(AugmentError::InvalidParam(format!("{name} = {v} not positive")));
            }
            if v < lo || v > hi {
                return Err(AugmentError::InvalidParam(format!(
                    "{name} = {v} outside the supported range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

fn princarg(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    x - two_pi * (x / two_pi).round()
}

/// Stretches duration by `alpha` without moving pitch. Output length is
/// `round(alpha * len)`; `alpha` of exactly 1 is a copy.
pub fn time_stretch(samples: &[f32], alpha: f64) -> Result<Vec<f32>, AugmentError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(AugmentError::InvalidParam(format!("alpha = {alpha} not positive")));
    }
    if alpha == 1.0 || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let out_len = (alpha * samples.len() as f64).round() as usize;
    if out_len == 0 {
        return Ok(Vec::new());
    }

    let n = VOCODER_WINDOW;
    let half = (n / 2) as i64;
    let window = hann_window(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let analysis = |center: i64, buf: &mut Vec<Complex<f64>>, scratch: &mut Vec<Complex<f64>>| {
        buf.clear();
        for j in 0..n as i64 {
            let s = crate::frontend::reflect_index(center - half + j, samples.len() as i64);
            buf.push(Complex::new(samples[s] as f64 * window[j as usize], 0.0));
        }
        fft.process_with_scratch(buf, scratch);
    };

    let frames = out_len / VOCODER_HOP + 2;
    let bins = n / 2 + 1;
    let mut out = vec![0.0f64; frames * VOCODER_HOP + n];
    let mut norm = vec![0.0f64; frames * VOCODER_HOP + n];
    let mut buf = Vec::with_capacity(n);
    let mut prev_phase = vec![0.0f64; bins];
    let mut prev_mag = vec![0.0f64; bins];
    let mut synth_phase = vec![0.0f64; bins];
    let mut locked = vec![0.0f64; bins];
    let mut prev_center = 0i64;
    let mut mean_flux = 0.0f64;

    for k in 0..frames {
        let center = (k as f64 * VOCODER_HOP as f64 / alpha).round() as i64;
        analysis(center, &mut buf, &mut scratch);
        let mags: Vec<f64> = buf[..bins].iter().map(|c| c.norm()).collect();
        let phases: Vec<f64> = buf[..bins].iter().map(|c| c.im.atan2(c.re)).collect();

        let flux: f64 = mags
            .iter()
            .zip(&prev_mag)
            .map(|(&m, &p)| (m - p).max(0.0))
            .sum();
        let transient = k > 0 && mean_flux > 0.0 && flux > TRANSIENT_FLUX_RATIO * mean_flux;
        mean_flux = if k == 0 { flux } else { 0.9 * mean_flux + 0.1 * flux };

        if k == 0 || transient {
            // Identity phases at onset frames keep the attack shape intact.
            synth_phase.copy_from_slice(&phases);
        } else {
            let advance = (center - prev_center) as f64;
            for b in 0..bins {
                let omega = 2.0 * std::f64::consts::PI * b as f64 / n as f64;
                let deviation = princarg(phases[b] - prev_phase[b] - omega * advance);
                let instantaneous = omega + deviation / advance.max(1.0);
                synth_phase[b] = princarg(synth_phase[b] + instantaneous * VOCODER_HOP as f64);
            }
            // Phase locking: only spectral peaks keep their propagated
            // phase; bins around each peak reuse the analysis frame's
            // relative structure so every grain stays a clean waveform.
            let peaks: Vec<usize> = (1..bins - 1)
                .filter(|&b| mags[b] >= mags[b - 1] && mags[b] >= mags[b + 1] && mags[b] > 1e-12)
                .collect();
            locked.copy_from_slice(&synth_phase);
            for (i, &p) in peaks.iter().enumerate() {
                let lo = if i == 0 { 0 } else { (peaks[i - 1] + p) / 2 + 1 };
                let hi = if i + 1 < peaks.len() { (p + peaks[i + 1]) / 2 + 1 } else { bins };
                for b in lo..hi {
                    if b != p {
                        locked[b] = princarg(synth_phase[p] + phases[b] - phases[p]);
                    }
                }
            }
            synth_phase.copy_from_slice(&locked);
        }

        // Rebuild the full conjugate-symmetric spectrum; the self-conjugate
        // bins 0 and n/2 keep their (real-valued) analysis phases.
        buf[0] = Complex::from_polar(mags[0], phases[0]);
        buf[n / 2] = Complex::from_polar(mags[n / 2], phases[n / 2]);
        for b in 1..n / 2 {
            let c = Complex::from_polar(mags[b], synth_phase[b]);
            buf[b] = c;
            buf[n - b] = c.conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let at = k * VOCODER_HOP;
        for j in 0..n {
            // rustfft leaves the inverse unscaled; fold 1/n into the overlap.
            out[at + j] += buf[j].re / n as f64 * window[j];
            norm[at + j] += window[j] * window[j];
        }

        prev_phase = phases;
        prev_mag = mags;
        prev_center = center;
    }

    Ok((0..out_len)
        .map(|i| {
            let d = norm[i];
            if d > 1e-9 {
                (out[i] / d) as f32
            } else {
                0.0
            }
        })
        .collect())
}

/// Multiplies all frequencies by `beta` at unchanged length: resample to
/// `round(len / beta)` samples, then stretch back to exactly `len`.
pub fn pitch_shift(samples: &[f32], beta: f64) -> Result<Vec<f32>, AugmentError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(AugmentError::InvalidParam(format!("beta = {beta} not positive")));
    }
    if beta == 1.0 || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let mid_len = (samples.len() as f64 / beta).round() as usize;
    if mid_len == 0 {
        return Ok(vec![0.0; samples.len()]);
    }
    let mid = sinc_resample(samples, beta, mid_len);
    // Stretch by len/mid_len (= beta up to rounding) for an exact length.
    time_stretch(&mid, samples.len() as f64 / mid_len as f64)
}

/// Audio and labels transformed together, plus how many notes the semitone
/// shift pushed off the keyboard.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub samples: Vec<f32>,
    pub labels: NoteSequence,
    pub dropped_notes: usize,
}

/// Applies `alpha` and `beta` to a recording and its labels: times scale by
/// `alpha`, pitches move by `round(12 log2 beta)` semitones, and notes
/// landing outside the 88-key range are dropped and counted.
pub fn augment_pair(
    samples: &[f32],
    seq: &NoteSequence,
    params: &AugmentParams,
) -> Result<AugmentedPair, AugmentError> {
    params.validate(GUARD_RAIL_LO, GUARD_RAIL_HI)?;
    let audio = if params.alpha == 1.0 && params.beta == 1.0 {
        samples.to_vec()
    } else {
        pitch_shift(&time_stretch(samples, params.alpha)?, params.beta)?
    };

    let semis = params.semitones().round() as i32;
    let mut dropped = 0usize;
    let mut notes = Vec::with_capacity(seq.notes.len());
    for n in &seq.notes {
        let pitch = n.pitch as i32 + semis;
        if !(PITCH_MIN as i32..=PITCH_MAX as i32).contains(&pitch) {
            dropped += 1;
            continue;
        }
        let mut n = *n;
        n.pitch = pitch as u8;
        n.onset *= params.alpha;
        n.offset *= params.alpha;
        notes.push(n);
    }
    let pedals = seq
        .pedals
        .iter()
        .map(|p| crate::midi::PedalEvent { time: p.time * params.alpha, ..*p })
        .collect();
    let labels = NoteSequence::from_parts(notes, pedals, seq.duration * params.alpha)
        .map_err(|e| AugmentError::Label(e.to_string()))?;
    Ok(AugmentedPair { samples: audio, labels, dropped_notes: dropped })
}
