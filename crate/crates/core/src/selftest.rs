//! Self-contained verification suite: every core guarantee checked
//! against independent oracles at runtime, with one outcome per check.
//!
//! The same checks back the `selftest` CLI subcommand and the
//! acceptance test target, so users and CI exercise identical code. All
//! randomness is seeded; every oracle here is written directly from the
//! defining rule or formula rather than by calling the implementation
//! under test.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment;
use crate::dataset::{self, Manifest, ManifestEntry, Split, SplitViolation};
use crate::decoder::{self, DecoderParams, ScoredNote, ScorePrediction};
use crate::eval::{self, MatchConfig};
use crate::frontend::{self, FrontendConfig};
use crate::losses::{self, LossConfig, LossKind};
use crate::matrix::Matrix;
use crate::midi::{self, NoteEvent, NoteSequence, PedalEvent, NUM_KEYS, PITCH_MIN};
use crate::network::{self, ops, weights::WeightTensor, ModelSpec, ModelWeights};
use crate::roll::{self, PianoRoll, RollConfig, RollKind};

/// Result of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// What was verified on success, or what went wrong on failure.
    pub details: String,
    pub duration_secs: f64,
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

fn run_check(
    name: &'static str,
    body: impl FnOnce() -> Result<String, String>,
) -> CheckOutcome {
    let start = Instant::now();
    let result = body();
    let duration_secs = start.elapsed().as_secs_f64();
    match result {
        Ok(details) => CheckOutcome { name, passed: true, details, duration_secs },
        Err(details) => CheckOutcome { name, passed: false, details, duration_secs },
    }
}

/// Every check, by name, in canonical order.
pub const CHECKS: &[(&str, fn(u64) -> CheckOutcome)] = &[
    ("loss-gradients", loss_gradients),
    ("loss-identities", loss_identities),
    ("decoder-round-trip", decoder_round_trip),
    ("nms-properties", nms_properties),
    ("eval-matching-oracle", eval_matching_oracle),
    ("alignment-rates", alignment_rates),
    ("frontend-spectrogram", frontend_spectrogram),
    ("network-forward", network_forward),
    ("sustain-resolution", sustain_resolution),
    ("dataset-stats", dataset_stats),
    ("augmentation", augmentation),
    ("end-to-end-determinism", end_to_end_determinism),
];

/// Runs every check with fixtures derived from `seed`, in a fixed
/// order.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (_, check))| check(seed.wrapping_add(i as u64)))
        .collect()
}

// ---------------------------------------------------------------------------
// Shared fixture helpers

const DT: f64 = 0.024;

fn random_roll(kind: RollKind, keys: usize, frames: usize, rng: &mut ChaCha8Rng) -> PianoRoll {
    let data: Vec<f64> = (0..keys * frames).map(|_| rng.gen_range(0.05..0.95)).collect();
    PianoRoll::from_matrix(kind, DT, Matrix::from_vec(keys, frames, data))
}

fn random_binary_roll(
    kind: RollKind,
    keys: usize,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> PianoRoll {
    let data: Vec<f64> =
        (0..keys * frames).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
    PianoRoll::from_matrix(kind, DT, Matrix::from_vec(keys, frames, data))
}

/// A short sequence whose notes fit inside `frames` frames.
fn short_sequence(frames: usize, notes: usize, rng: &mut ChaCha8Rng) -> NoteSequence {
    let horizon = frames as f64 * DT;
    let mut events = Vec::new();
    for _ in 0..notes {
        let onset = rng.gen_range(0.0..horizon * 0.8);
        events.push(NoteEvent {
            onset,
            offset: onset + rng.gen_range(0.03..horizon - onset + 0.02).min(horizon - 1e-6 - onset).max(0.01),
            pitch: PITCH_MIN + rng.gen_range(0..NUM_KEYS) as u8,
            velocity: rng.gen_range(0.1..1.0),
        });
    }
    events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap().then(a.pitch.cmp(&b.pitch)));
    NoteSequence::from_parts(events, Vec::new(), horizon).expect("valid fixture sequence")
}

fn sine(seconds: f64, freq: f64, amplitude: f64) -> Vec<f32> {
    let n = (seconds * 16_000.0).round() as usize;
    (0..n)
        .map(|i| {
            (amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32
        })
        .collect()
}

/// Dominant frequency of a signal slice by zero-padded FFT with
/// parabolic interpolation on log magnitudes — independent of the
/// spectrogram code paths.
fn dominant_frequency(samples: &[f32], sample_rate: f64) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let take = samples.len().min(8192);
    let offset = (samples.len() - take) / 2;
    let fft_len = 1 << 16;
    let mut buf = vec![Complex { re: 0.0f64, im: 0.0 }; fft_len];
    for (i, &s) in samples[offset..offset + take].iter().enumerate() {
        // Hann taper against leakage
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / take as f64).cos();
        buf[i].re = s as f64 * w;
    }
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);
    let half = fft_len / 2;
    let mags: Vec<f64> = buf[..half].iter().map(|c| c.norm()).collect();
    let peak = (1..half - 1).max_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap()).unwrap();
    let (a, b, c) = (mags[peak - 1].ln(), mags[peak].ln(), mags[peak + 1].ln());
    let shift = 0.5 * (a - c) / (a - 2.0 * b + c);
    (peak as f64 + shift) * sample_rate / fft_len as f64
}

fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// 1. Loss gradients vs finite differences

pub fn loss_gradients(seed: u64) -> CheckOutcome {
    run_check("loss-gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LossConfig { lambda: 1.3, completion_frames: 2, ..LossConfig::default() };
        let h = 1e-5;
        let tol = 1e-4;
        let mut worst: f64 = 0.0;

        // elementary losses on 8x8 rolls, every cell probed
        for i in 0..20 {
            for kind in [
                LossKind::Bce,
                LossKind::FrameRaw,
                LossKind::FrameWeighted,
                LossKind::VelocityMasked,
            ] {
                let pred = random_roll(RollKind::Prediction, 8, 8, &mut rng);
                let target = random_binary_roll(RollKind::Frame, 8, 8, &mut rng);
                let mask = random_binary_roll(RollKind::OnsetProlonged, 8, 8, &mut rng);
                let m = (kind == LossKind::VelocityMasked).then_some(&mask);
                let analytic = losses::loss_gradient(kind, &pred, &target, m, &cfg)
                    .map_err(|e| format!("gradient failed: {e}"))?;
                let fd = losses::finite_difference_gradient(kind, &pred, &target, m, &cfg, h)
                    .map_err(|e| format!("finite differences failed: {e}"))?;
                let err = losses::max_relative_gradient_error(&analytic, &fd);
                worst = worst.max(err);
                if err > tol {
                    return Err(format!("fixture {i} {kind:?}: relative error {err:.3e} > {tol:e}"));
                }
            }
        }

        // composed two-part loss: probe an 8x8 block of each full-size roll
        for i in 0..20 {
            let seq = short_sequence(8, 5, &mut rng);
            let p_onset = random_roll(RollKind::Prediction, NUM_KEYS, 8, &mut rng);
            let p_frame = random_roll(RollKind::Prediction, NUM_KEYS, 8, &mut rng);
            let probe_keys: Vec<usize> = (0..8).map(|_| rng.gen_range(0..NUM_KEYS)).collect();

            let roll_cfg = RollConfig { delta_t: DT, ..RollConfig::default() };
            let labels = roll::quantize(&seq, &roll_cfg, Some(8))
                .map_err(|e| format!("quantize failed: {e}"))?;
            let onset_ind = losses::onset_indicator(&seq, &cfg, DT, 8)
                .map_err(|e| format!("onset indicator failed: {e}"))?;
            let g_onset = losses::loss_gradient(LossKind::Bce, &p_onset, &onset_ind, None, &cfg)
                .map_err(|e| format!("onset gradient failed: {e}"))?;
            let g_frame = losses::loss_gradient(
                LossKind::FrameWeighted,
                &p_frame,
                &labels.frames,
                None,
                &cfg,
            )
            .map_err(|e| format!("frame gradient failed: {e}"))?;

            for (roll_idx, analytic) in [(0usize, &g_onset), (1, &g_frame)] {
                for &k in &probe_keys {
                    for t in 0..8usize {
                        let eval_at = |po: &PianoRoll, pf: &PianoRoll| {
                            losses::total_loss(po, pf, &seq, &cfg).map(|b| b.total)
                        };
                        let mut up_o = p_onset.clone();
                        let mut dn_o = p_onset.clone();
                        let mut up_f = p_frame.clone();
                        let mut dn_f = p_frame.clone();
                        let (up, down) = if roll_idx == 0 {
                            let p = p_onset.get(k, t);
                            up_o.matrix_mut().set(k, t, p + h);
                            dn_o.matrix_mut().set(k, t, p - h);
                            (eval_at(&up_o, &p_frame), eval_at(&dn_o, &p_frame))
                        } else {
                            let p = p_frame.get(k, t);
                            up_f.matrix_mut().set(k, t, p + h);
                            dn_f.matrix_mut().set(k, t, p - h);
                            (eval_at(&p_onset, &up_f), eval_at(&p_onset, &dn_f))
                        };
                        let fd = (up.map_err(|e| e.to_string())?
                            - down.map_err(|e| e.to_string())?)
                            / (2.0 * h);
                        let a = analytic.get(k, t);
                        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                        worst = worst.max(err);
                        if err > tol {
                            return Err(format!(
                                "two-part fixture {i} roll {roll_idx} cell ({k},{t}): error {err:.3e}"
                            ));
                        }
                    }
                }
            }
        }

        // multi-stage loss: probe one stage and the velocity head
        for i in 0..20 {
            let stages: Vec<PianoRoll> =
                (0..3).map(|_| random_roll(RollKind::Prediction, 8, 8, &mut rng)).collect();
            let vel = random_roll(RollKind::Prediction, 8, 8, &mut rng);
            let onset3 = random_binary_roll(RollKind::OnsetProlonged, 8, 8, &mut rng);
            let vel3 = random_roll(RollKind::VelocityProlonged, 8, 8, &mut rng);
            let stage_idx = (i % 3) as usize;

            let g_stage =
                losses::loss_gradient(LossKind::Bce, &stages[stage_idx], &onset3, None, &cfg)
                    .map_err(|e| e.to_string())?;
            let g_vel_raw = losses::loss_gradient(
                LossKind::VelocityMasked,
                &vel,
                &vel3,
                Some(&onset3),
                &cfg,
            )
            .map_err(|e| e.to_string())?;

            for k in 0..8usize {
                for t in 0..8usize {
                    // stage cell
                    let mut up = stages.clone();
                    let mut dn = stages.clone();
                    let p = stages[stage_idx].get(k, t);
                    up[stage_idx].matrix_mut().set(k, t, p + h);
                    dn[stage_idx].matrix_mut().set(k, t, p - h);
                    let lu = losses::multitask_loss(&up, &vel, &onset3, &vel3, &cfg)
                        .map_err(|e| e.to_string())?
                        .total;
                    let ld = losses::multitask_loss(&dn, &vel, &onset3, &vel3, &cfg)
                        .map_err(|e| e.to_string())?
                        .total;
                    let fd = (lu - ld) / (2.0 * h);
                    let a = g_stage.get(k, t);
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(err);
                    if err > tol {
                        return Err(format!(
                            "multi-stage fixture {i} stage cell ({k},{t}): error {err:.3e}"
                        ));
                    }

                    // velocity cell (analytic scales with lambda)
                    let mut vu = vel.clone();
                    let mut vd = vel.clone();
                    let p = vel.get(k, t);
                    vu.matrix_mut().set(k, t, p + h);
                    vd.matrix_mut().set(k, t, p - h);
                    let lu = losses::multitask_loss(&stages, &vu, &onset3, &vel3, &cfg)
                        .map_err(|e| e.to_string())?
                        .total;
                    let ld = losses::multitask_loss(&stages, &vd, &onset3, &vel3, &cfg)
                        .map_err(|e| e.to_string())?
                        .total;
                    let fd = (lu - ld) / (2.0 * h);
                    let a = cfg.lambda * g_vel_raw.get(k, t);
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(err);
                    if err > tol {
                        return Err(format!(
                            "multi-stage fixture {i} velocity cell ({k},{t}): error {err:.3e}"
                        ));
                    }
                }
            }
        }

        Ok(format!(
            "all analytic gradients within 1e-4 of central differences (worst {worst:.2e})"
        ))
    })
}

// ---------------------------------------------------------------------------
// 2. Loss identities

pub fn loss_identities(seed: u64) -> CheckOutcome {
    run_check("loss-identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..50 {
            // two-part loss additivity, exact
            let seq = short_sequence(8, 5, &mut rng);
            let p_onset = random_roll(RollKind::Prediction, NUM_KEYS, 8, &mut rng);
            let p_frame = random_roll(RollKind::Prediction, NUM_KEYS, 8, &mut rng);
            let cfg = LossConfig::default();
            let b = losses::total_loss(&p_onset, &p_frame, &seq, &cfg)
                .map_err(|e| e.to_string())?;
            if b.total != b.onset + b.frame {
                return Err(format!(
                    "fixture {i}: total {} != onset {} + frame {}",
                    b.total, b.onset, b.frame
                ));
            }

            // lambda linearity of the multi-stage loss
            let stages: Vec<PianoRoll> =
                (0..3).map(|_| random_roll(RollKind::Prediction, 8, 8, &mut rng)).collect();
            let vel = random_roll(RollKind::Prediction, 8, 8, &mut rng);
            let onset3 = random_binary_roll(RollKind::OnsetProlonged, 8, 8, &mut rng);
            let vel3 = random_roll(RollKind::VelocityProlonged, 8, 8, &mut rng);
            let (la, lb) = (0.7, 2.1);
            let ma = losses::multitask_loss(
                &stages,
                &vel,
                &onset3,
                &vel3,
                &LossConfig { lambda: la, ..cfg },
            )
            .map_err(|e| e.to_string())?;
            let mb = losses::multitask_loss(
                &stages,
                &vel,
                &onset3,
                &vel3,
                &LossConfig { lambda: lb, ..cfg },
            )
            .map_err(|e| e.to_string())?;
            if ma.velocity_term != mb.velocity_term || ma.stage_terms != mb.stage_terms {
                return Err(format!("fixture {i}: lambda changed a lambda-free term"));
            }
            let stage_sum: f64 = ma.stage_terms.iter().sum();
            let residual_a = ma.total - stage_sum;
            let residual_b = mb.total - stage_sum;
            let want = residual_a / la * lb;
            if (residual_b - want).abs() > 1e-9 * want.abs().max(1.0) {
                return Err(format!(
                    "fixture {i}: lambda residuals {residual_a} -> {residual_b}, want {want}"
                ));
            }

            // masked-out cells carry exactly zero gradient
            let g = losses::loss_gradient(
                LossKind::VelocityMasked,
                &vel,
                &vel3,
                Some(&onset3),
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            for k in 0..8 {
                for t in 0..8 {
                    if onset3.get(k, t) < 0.5 && g.get(k, t) != 0.0 {
                        return Err(format!(
                            "fixture {i}: masked cell ({k},{t}) has gradient {}",
                            g.get(k, t)
                        ));
                    }
                }
            }
        }
        Ok("additivity, lambda linearity, and masked zero-gradient held on 50 fixtures".into())
    })
}

// ---------------------------------------------------------------------------
// 3. Decoder round-trip

pub fn decoder_round_trip(seed: u64) -> CheckOutcome {
    run_check("decoder-round-trip", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut isolated_total = 0usize;
        let mut isolated_recovered = 0usize;

        for case in 0..100 {
            // random sequence, up to 50 notes over ~24 seconds
            let notes = rng.gen_range(5..=50);
            let mut events = Vec::new();
            for _ in 0..notes {
                let frame = rng.gen_range(2..1000usize);
                let onset = frame as f64 * DT;
                events.push(NoteEvent {
                    onset,
                    offset: onset + rng.gen_range(0.05..0.5),
                    pitch: PITCH_MIN + rng.gen_range(0..NUM_KEYS) as u8,
                    velocity: rng.gen_range(0.2..1.0),
                });
            }
            events.sort_by(|a, b| {
                a.onset.partial_cmp(&b.onset).unwrap().then(a.pitch.cmp(&b.pitch))
            });
            let duration = events.iter().map(|n| n.offset).fold(0.0, f64::max) + 1.0;
            let seq = NoteSequence::from_parts(events, Vec::new(), duration)
                .map_err(|e| e.to_string())?;
            let cfg = RollConfig { delta_t: DT, ..RollConfig::default() };
            let labels = roll::quantize(&seq, &cfg, None).map_err(|e| e.to_string())?;

            // leg 1: no smoothing, no shift — exact recovery of every cell
            let exact = DecoderParams { sigma: 0.0, rho: 0.74, mu: 0.0 };
            let score = decoder::decode(&labels.onset, &labels.velocity, &exact)
                .map_err(|e| e.to_string())?;
            let mut want: Vec<(usize, usize)> = labels.onset.active_cells().collect();
            want.sort_by_key(|&(k, t)| (t, k));
            if score.events.len() != want.len() {
                return Err(format!(
                    "case {case}: decoded {} events, labels have {} onset cells",
                    score.events.len(),
                    want.len()
                ));
            }
            for (e, (k, t)) in score.events.iter().zip(&want) {
                let (k, t) = (*k, *t);
                if e.pitch as usize != PITCH_MIN as usize + k
                    || e.time != DT * t as f64
                    || e.velocity != labels.velocity.get(k, t)
                {
                    return Err(format!(
                        "case {case}: cell ({k},{t}) decoded as pitch {} t {} v {}",
                        e.pitch, e.time, e.velocity
                    ));
                }
            }

            // leg 2: deployment defaults over prolonged labels
            let (on3, vel3) =
                roll::prolong(&labels.onset, &labels.velocity).map_err(|e| e.to_string())?;
            let score = decoder::decode(&on3, &vel3, &DecoderParams::default())
                .map_err(|e| e.to_string())?;
            let cells: Vec<(usize, usize)> = labels.onset.active_cells().collect();
            let tolerance = DT / 2.0 + 0.01;
            for &(k, t) in &cells {
                let isolated = cells
                    .iter()
                    .all(|&(ok, ot)| ok != k || ot == t || ot.abs_diff(t) >= 3);
                if !isolated {
                    continue;
                }
                isolated_total += 1;
                let quantized = DT * t as f64;
                let hit = score.events.iter().any(|e| {
                    e.pitch as usize == PITCH_MIN as usize + k
                        && (e.time - quantized).abs() <= tolerance
                });
                if hit {
                    isolated_recovered += 1;
                }
            }
        }

        let rate = isolated_recovered as f64 / isolated_total as f64;
        if rate < 0.95 {
            return Err(format!(
                "smoothed decoding recovered {isolated_recovered}/{isolated_total} isolated onsets ({:.1}%)",
                rate * 100.0
            ));
        }
        Ok(format!(
            "exact recovery with no smoothing; smoothed defaults recovered {isolated_recovered}/{isolated_total} isolated onsets ({:.2}%)",
            rate * 100.0
        ))
    })
}

// ---------------------------------------------------------------------------
// 4. Suppression properties

pub fn nms_properties(seed: u64) -> CheckOutcome {
    run_check("nms-properties", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys = 1000;
        let frames = 24;
        let data: Vec<f64> = (0..keys * frames)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) })
            .collect();
        let roll =
            PianoRoll::from_matrix(RollKind::Prediction, DT, Matrix::from_vec(keys, frames, data));
        let once = decoder::nms(&roll);
        let twice = decoder::nms(&once);
        if once != twice {
            return Err("suppression is not idempotent".into());
        }
        for k in 0..keys {
            for t in 0..frames {
                let v = roll.get(k, t);
                let out = once.get(k, t);
                // the quoted rule, applied cell by cell
                let smaller_than_prev = t > 0 && v < roll.get(k, t - 1);
                let smaller_than_next = t + 1 < frames && v < roll.get(k, t + 1);
                let want = if smaller_than_prev || smaller_than_next { 0.0 } else { v };
                if out != want {
                    return Err(format!("cell ({k},{t}): {v} suppressed to {out}, rule says {want}"));
                }
                if out != 0.0 && out != v {
                    return Err(format!("cell ({k},{t}): value changed rather than zeroed"));
                }
                if out > v {
                    return Err(format!("cell ({k},{t}): suppression raised a value"));
                }
            }
        }
        Ok(format!("{keys} random rows: idempotent, non-increasing, cell-rule exact"))
    })
}

// ---------------------------------------------------------------------------
// 5. Matching vs exhaustive oracle

fn oracle_edge(r: &ScoredNote, e: &ScoredNote, cfg: &MatchConfig) -> bool {
    (!cfg.require_pitch_equal || r.pitch == e.pitch)
        && (r.time - e.time).abs() <= cfg.onset_tolerance
        && (!cfg.require_velocity || (r.velocity - e.velocity).abs() <= cfg.velocity_tolerance)
}

fn oracle_max_matching(
    reference: &ScorePrediction,
    estimate: &ScorePrediction,
    cfg: &MatchConfig,
) -> usize {
    let cands: Vec<Vec<usize>> = reference
        .events
        .iter()
        .map(|r| {
            (0..estimate.events.len())
                .filter(|&j| oracle_edge(r, &estimate.events[j], cfg))
                .collect()
        })
        .collect();
    fn best(
        i: usize,
        used: u32,
        cands: &[Vec<usize>],
        memo: &mut HashMap<(usize, u32), usize>,
    ) -> usize {
        if i == cands.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut out = best(i + 1, used, cands, memo);
        for &j in &cands[i] {
            if used & (1 << j) == 0 {
                out = out.max(1 + best(i + 1, used | (1 << j), cands, memo));
            }
        }
        memo.insert((i, used), out);
        out
    }
    best(0, 0, &cands, &mut HashMap::new())
}

pub fn eval_matching_oracle(seed: u64) -> CheckOutcome {
    run_check("eval-matching-oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = MatchConfig::default();
        for case in 0..200 {
            let make = |rng: &mut ChaCha8Rng| {
                let n = rng.gen_range(1..=10);
                let mut events: Vec<ScoredNote> = (0..n)
                    .map(|_| ScoredNote {
                        pitch: rng.gen_range(60u8..64),
                        velocity: rng.gen_range(0.0..1.0),
                        time: rng.gen_range(0.0..0.6),
                    })
                    .collect();
                events.sort_by(|a, b| {
                    a.time.partial_cmp(&b.time).unwrap().then(a.pitch.cmp(&b.pitch))
                });
                ScorePrediction { events }
            };
            let reference = make(&mut rng);
            let estimate = make(&mut rng);
            let use_velocity = case % 2 == 1;
            let cfg_case = MatchConfig { require_velocity: use_velocity, ..cfg };
            let got = eval::match_notes(&reference, &estimate, &cfg_case)
                .map_err(|e| e.to_string())?
                .len();
            let want = oracle_max_matching(&reference, &estimate, &cfg_case);
            if got != want {
                return Err(format!("case {case}: matching size {got}, oracle says {want}"));
            }
        }

        // boundary fixtures
        let note = |time: f64, velocity: f64| ScorePrediction {
            events: vec![ScoredNote { pitch: 60, velocity, time }],
        };
        let pairs = [
            (note(0.0, 0.5), note(0.06, 0.5), MatchConfig::default(), 0, "60 ms onset"),
            (note(0.0, 0.5), note(0.05, 0.5), MatchConfig::default(), 1, "50 ms onset"),
            (
                note(0.0, 0.5),
                note(0.0, 0.6),
                MatchConfig { require_velocity: true, ..cfg },
                1,
                "velocity gap 0.1",
            ),
            (
                note(0.0, 0.5),
                note(0.0, 0.61),
                MatchConfig { require_velocity: true, ..cfg },
                0,
                "velocity gap 0.11",
            ),
        ];
        for (reference, estimate, cfg_case, want, label) in pairs {
            let got = eval::match_notes(&reference, &estimate, &cfg_case)
                .map_err(|e| e.to_string())?
                .len();
            if got != want {
                return Err(format!("{label}: matched {got}, want {want}"));
            }
        }
        Ok("200 random instances equal the exhaustive maximum; window boundaries exact".into())
    })
}

// ---------------------------------------------------------------------------
// 6. Alignment rates

pub fn alignment_rates(seed: u64) -> CheckOutcome {
    run_check("alignment-rates", || {
        // the constructed 100-note piece
        let ref_notes: Vec<ScoredNote> = (0..100)
            .map(|i| ScoredNote {
                pitch: 60 + (i % 12) as u8,
                velocity: 0.5,
                time: i as f64 * 0.1,
            })
            .collect();
        let mut est_notes = Vec::new();
        for (i, r) in ref_notes.iter().enumerate() {
            match i {
                0..=4 => {}
                5 => est_notes.push(ScoredNote { pitch: r.pitch + 1, ..*r }),
                _ => est_notes.push(*r),
            }
        }
        est_notes.push(ScoredNote { pitch: 70, velocity: 0.5, time: 50.03 });
        est_notes.push(ScoredNote { pitch: 71, velocity: 0.5, time: 70.55 });
        let reference = ScorePrediction { events: ref_notes };
        let estimate = ScorePrediction { events: est_notes };
        let a = eval::alignment_stats(&reference, &estimate, &MatchConfig::default())
            .map_err(|e| e.to_string())?;
        let want = (0.01, 0.05, 0.02, 0.08);
        let got = (a.substitution_rate, a.deletion_rate, a.insertion_rate, a.error_rate);
        if (got.0 - want.0).abs() > 1e-12
            || (got.1 - want.1).abs() > 1e-12
            || (got.2 - want.2).abs() > 1e-12
            || (got.3 - want.3).abs() > 1e-12
        {
            return Err(format!("fixture rates {got:?}, want {want:?}"));
        }

        // identity and bounds on random fixtures
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for case in 0..50 {
            let make = |rng: &mut ChaCha8Rng, n: usize| ScorePrediction {
                events: (0..n)
                    .map(|_| ScoredNote {
                        pitch: rng.gen_range(60u8..66),
                        velocity: 0.5,
                        time: rng.gen_range(0.0..2.0),
                    })
                    .collect(),
            };
            let ref_len = rng.gen_range(1..20);
            let est_len = rng.gen_range(0..20);
            let reference = make(&mut rng, ref_len);
            let estimate = make(&mut rng, est_len);
            let a = eval::alignment_stats(&reference, &estimate, &MatchConfig::default())
                .map_err(|e| e.to_string())?;
            if a.error_rate != a.substitution_rate + a.deletion_rate + a.insertion_rate {
                return Err(format!("case {case}: error rate is not the exact sum"));
            }
            if a.substitution_rate + a.deletion_rate > 1.0 + 1e-12 {
                return Err(format!("case {case}: substitutions + deletions exceed 1"));
            }
        }
        Ok("constructed piece gives S/D/I/ER = 0.01/0.05/0.02/0.08; sum identity on 50 fixtures"
            .into())
    })
}

// ---------------------------------------------------------------------------
// 7. Spectrogram frontend

pub fn frontend_spectrogram(_seed: u64) -> CheckOutcome {
    run_check("frontend-spectrogram", || {
        let cfg = FrontendConfig::default();
        let tone = sine(1.0, 440.0, 0.5);

        // 440 Hz lands in power-spectrum bin 56 (440 / (16000/2048) = 56.3)
        let power = frontend::stft_power(&tone, &cfg).map_err(|e| e.to_string())?;
        let frames = power.cols();
        for t in 3..frames - 3 {
            let mut best = 0;
            for b in 0..power.rows() {
                if power.get(b, t) > power.get(best, t) {
                    best = b;
                }
            }
            if best != 56 {
                return Err(format!("frame {t}: energy peaks at bin {best}, expected 56"));
            }
        }

        // doubling amplitude raises log power by ln 4
        let quiet = frontend::compute(&tone, &cfg).map_err(|e| e.to_string())?;
        let loud =
            frontend::compute(&sine(1.0, 440.0, 1.0), &cfg).map_err(|e| e.to_string())?;
        let (mut peak_bin, mut peak_val) = (0, f64::MIN);
        let mid = quiet.mel.cols() / 2;
        for b in 0..quiet.mel.rows() {
            if quiet.mel.get(b, mid) > peak_val {
                peak_val = quiet.mel.get(b, mid);
                peak_bin = b;
            }
        }
        let lift = loud.mel.get(peak_bin, mid) - quiet.mel.get(peak_bin, mid);
        let ln4 = 4.0f64.ln();
        if (lift - ln4).abs() > 1e-3 {
            return Err(format!("doubling lifted log energy by {lift}, want {ln4}"));
        }

        // frame counts agree between the frontend and label quantization
        let frontend_frames = cfg.frames_for(tone.len());
        let seq = NoteSequence::from_parts(
            vec![NoteEvent { onset: 0.1, offset: 0.4, pitch: 60, velocity: 0.5 }],
            Vec::new(),
            tone.len() as f64 / cfg.sample_rate as f64,
        )
        .map_err(|e| e.to_string())?;
        let roll_cfg = RollConfig { delta_t: cfg.delta_t(), ..RollConfig::default() };
        let labels = roll::quantize(&seq, &roll_cfg, None).map_err(|e| e.to_string())?;
        if labels.onset.frames() != frontend_frames {
            return Err(format!(
                "frontend computes {frontend_frames} frames, labels quantize to {}",
                labels.onset.frames()
            ));
        }

        // the derivative plane telescopes back to the log-mel plane
        let mut worst = 0.0f64;
        for r in 0..quiet.mel.rows() {
            let mut acc = quiet.mel.get(r, 0);
            for t in 1..quiet.mel.cols() {
                acc += quiet.delta.get(r, t);
                worst = worst.max((acc - quiet.mel.get(r, t)).abs());
            }
        }
        if worst > 1e-12 {
            return Err(format!("derivative reconstruction drifts by {worst:.3e}"));
        }

        Ok(format!(
            "peak bin 56 on all interior frames; gain lift ln4 within 1e-3; {} frames agree; reconstruction drift {worst:.1e}",
            frontend_frames
        ))
    })
}

// ---------------------------------------------------------------------------
// 8. Network forward pass

fn naive_conv(
    x: &ops::Tensor,
    w: &WeightTensor,
    pad_v: i64,
    pad_t: i64,
    dil_t: i64,
) -> ops::Tensor {
    let (co, ci, kv, kt) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
    let (_, v_in, t_in) = x.shape();
    let v_out = v_in + 2 * pad_v as usize - kv + 1;
    let t_out = t_in as i64 + 2 * pad_t - dil_t * (kt as i64 - 1) - 1 + 1;
    let mut out = ops::Tensor::zeros(co, v_out, t_out as usize);
    for o in 0..co {
        for v in 0..v_out {
            for t in 0..t_out as usize {
                let mut acc = 0.0f64;
                for c in 0..ci {
                    for dv in 0..kv {
                        for dt in 0..kt {
                            let sv = v as i64 + dv as i64 - pad_v;
                            let st = t as i64 + (dt as i64) * dil_t - pad_t;
                            if sv >= 0
                                && (sv as usize) < v_in
                                && st >= 0
                                && (st as usize) < t_in
                            {
                                let wi = ((o * ci + c) * kv + dv) * kt + dt;
                                acc += w.data[wi] as f64
                                    * x.get(c, sv as usize, st as usize) as f64;
                            }
                        }
                    }
                }
                out.set(o, v, t, acc as f32);
            }
        }
    }
    out
}

pub fn network_forward(seed: u64) -> CheckOutcome {
    run_check("network-forward", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // convolution against a direct-summation oracle
        for (pad_v, pad_t, dil_t) in [(1usize, 1usize, 1usize), (0, 2, 2), (1, 4, 4)] {
            let x = ops::Tensor::from_data(
                4,
                6,
                10,
                (0..4 * 6 * 10).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            )
            .map_err(|e| e.to_string())?;
            let w = WeightTensor::new(
                vec![5, 4, 3, 3],
                (0..5 * 4 * 3 * 3).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            )
            .map_err(|e| e.to_string())?;
            let got = ops::conv2d(&x, &w, None, pad_v, pad_t, dil_t).map_err(|e| e.to_string())?;
            let want = naive_conv(&x, &w, pad_v as i64, pad_t as i64, dil_t as i64);
            if got.shape() != want.shape() {
                return Err(format!("conv shape {:?} vs oracle {:?}", got.shape(), want.shape()));
            }
            let worst = got
                .data
                .iter()
                .zip(&want.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            if worst > 1e-5 {
                return Err(format!(
                    "conv (pad {pad_v},{pad_t} dil {dil_t}) deviates from oracle by {worst}"
                ));
            }
        }

        // a residual branch built from zeroed convolutions is exactly the identity
        let x = ops::Tensor::from_data(
            3,
            5,
            7,
            (0..3 * 5 * 7).map(|_| rng.gen_range(-2.0f32..2.0)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let zero_w = WeightTensor::filled(vec![3, 3, 1, 1], 0.0);
        let gamma = WeightTensor::filled(vec![3, 5], 1.0);
        let beta = WeightTensor::filled(vec![3, 5], 0.0);
        let mean = WeightTensor::filled(vec![3, 5], 0.0);
        let var = WeightTensor::filled(vec![3, 5], 1.0);
        let mut branch = ops::conv2d(&x, &zero_w, None, 0, 0, 1).map_err(|e| e.to_string())?;
        branch = ops::sbn(&branch, &gamma, &beta, &mean, &var, network::BN_EPS)
            .map_err(|e| e.to_string())?;
        branch = ops::leaky_relu(&branch, 0.01);
        branch = ops::conv2d(&branch, &zero_w, None, 0, 0, 1).map_err(|e| e.to_string())?;
        let summed = ops::add(&x, &branch).map_err(|e| e.to_string())?;
        if summed != x {
            return Err("zeroed residual branch changed its input".into());
        }

        // a one-stage prefix of the weights reproduces stage one bit-for-bit
        let spec = ModelSpec::toy();
        let weights = ModelWeights::random(&spec, seed);
        let input = frontend::compute(&sine(0.5, 440.0, 0.5), &FrontendConfig::default())
            .map_err(|e| e.to_string())?;
        let full = network::forward(&spec, &weights, &input).map_err(|e| e.to_string())?;
        let mut one_stage = spec.clone();
        one_stage.num_onset_stages = 1;
        let prefix = weights
            .filtered(|name| !name.starts_with("onset.1.") && !name.starts_with("onset.2."));
        let short = network::forward(&one_stage, &prefix, &input).map_err(|e| e.to_string())?;
        if short.onset_stages[0] != full.onset_stages[0] {
            return Err("stage one depends on later stages' weights".into());
        }

        // time size is preserved for one, seven, and one hundred frames
        for frames in [1usize, 7, 100] {
            let mel = Matrix::from_vec(
                229,
                frames,
                (0..229 * frames).map(|_| rng.gen_range(-5.0..1.0)).collect(),
            );
            let delta = frontend::delta_plane(&mel);
            let probe = frontend::SpectroInput { mel, delta, delta_t: DT };
            let out = network::forward(&spec, &weights, &probe).map_err(|e| e.to_string())?;
            for stage in out.onset_stages.iter().chain([&out.velocity]) {
                if stage.keys() != NUM_KEYS || stage.frames() != frames {
                    return Err(format!(
                        "{frames}-frame input produced a {}x{} roll",
                        stage.keys(),
                        stage.frames()
                    ));
                }
                if !stage.matrix().data().iter().all(|&v| v > 0.0 && v < 1.0) {
                    return Err(format!("{frames}-frame output left (0,1)"));
                }
            }
        }

        // full-size configuration lands in the intended parameter budget
        let params = network::count_params(&ModelSpec::reference());
        if params != 3_123_952 || !(3_000_000..=3_300_000).contains(&params) {
            return Err(format!("full-size parameter count {params}"));
        }

        Ok(format!(
            "conv oracle, residual identity, stage-prefix equality, shape preservation; full-size params {params}"
        ))
    })
}

// ---------------------------------------------------------------------------
// 9. Sustain resolution

pub fn sustain_resolution(seed: u64) -> CheckOutcome {
    run_check("sustain-resolution", || {
        let note = |onset: f64, offset: f64| NoteEvent { onset, offset, pitch: 60, velocity: 0.5 };
        let pedal = |time: f64, engaged: bool| PedalEvent { time, engaged };

        // held pedal carries the note to the pedal release
        let seq = NoteSequence::from_parts(
            vec![note(1.0, 1.5)],
            vec![pedal(1.2, true), pedal(2.0, false)],
            3.0,
        )
        .map_err(|e| e.to_string())?;
        let resolved = midi::resolve_sustain(&seq);
        if resolved.notes[0].offset != 2.0 {
            return Err(format!(
                "pedal extension gave offset {}, want 2.0",
                resolved.notes[0].offset
            ));
        }

        // a re-struck key cuts the ringing note short
        let seq = NoteSequence::from_parts(
            vec![note(1.0, 1.5), note(1.8, 2.2)],
            vec![pedal(1.2, true), pedal(3.0, false)],
            4.0,
        )
        .map_err(|e| e.to_string())?;
        let resolved = midi::resolve_sustain(&seq);
        if resolved.notes[0].offset != 1.8 {
            return Err(format!(
                "re-strike truncation gave offset {}, want 1.8",
                resolved.notes[0].offset
            ));
        }

        // no pedal events: identity
        let seq = NoteSequence::from_parts(vec![note(0.5, 1.0), note(1.2, 1.4)], Vec::new(), 2.0)
            .map_err(|e| e.to_string())?;
        if midi::resolve_sustain(&seq) != seq {
            return Err("resolution without pedals changed the sequence".into());
        }

        // idempotence on random sequences with random pedal traces
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for case in 0..100 {
            let mut notes = Vec::new();
            for _ in 0..rng.gen_range(1..15) {
                let onset = rng.gen_range(0.0..8.0);
                notes.push(NoteEvent {
                    onset,
                    offset: onset + rng.gen_range(0.05..1.0),
                    pitch: PITCH_MIN + rng.gen_range(0..NUM_KEYS) as u8,
                    velocity: rng.gen_range(0.1..1.0),
                });
            }
            notes.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap().then(a.pitch.cmp(&b.pitch)));
            let mut pedals = Vec::new();
            let mut time = 0.0;
            let mut engaged = false;
            while time < 9.0 {
                time += rng.gen_range(0.2..1.5);
                engaged = !engaged;
                pedals.push(PedalEvent { time, engaged });
            }
            let seq = NoteSequence::from_parts(notes, pedals, 10.0).map_err(|e| e.to_string())?;
            let once = midi::resolve_sustain(&seq);
            let twice = midi::resolve_sustain(&once);
            if once != twice {
                return Err(format!("case {case}: resolution is not idempotent"));
            }
        }
        Ok("extension, re-strike truncation, identity, and idempotence all hold".into())
    })
}

// ---------------------------------------------------------------------------
// 10. Dataset statistics

pub fn dataset_stats(_seed: u64) -> CheckOutcome {
    run_check("dataset-stats", || {
        let mut entries = Vec::new();
        for i in 0..954usize {
            entries.push(ManifestEntry {
                audio: format!("audio/train-{i}.wav"),
                midi: format!("midi/train-{i}.mid"),
                composer: format!("composer-{}", i % 59),
                title: format!("work-{}", i % 295),
                year: 2018,
                split: Split::Train,
                duration_sec: if i == 0 { 1176.0 } else { 528.0 },
                notes: if i == 0 { 6241 } else { 5303 },
            });
        }
        let manifest = Manifest::from_entries(entries.clone()).map_err(|e| e.to_string())?;
        let table = dataset::stats(&manifest);
        let train = &table.rows[0];
        if train.performances != 954 || train.compositions != 295 {
            return Err(format!(
                "train row: {} performances / {} compositions",
                train.performances, train.compositions
            ));
        }
        if (train.duration_hours - 140.1).abs() > 1e-9 {
            return Err(format!("train hours {}", train.duration_hours));
        }
        if train.notes != 5_060_000 {
            return Err(format!("train notes {}", train.notes));
        }

        // planting one composition in a second split must be flagged
        entries.push(ManifestEntry {
            audio: "audio/leak.wav".into(),
            midi: "midi/leak.mid".into(),
            composer: "composer-0".into(),
            title: "work-0".into(),
            year: 2018,
            split: Split::Test,
            duration_sec: 100.0,
            notes: 100,
        });
        let leaky = Manifest::from_entries(entries).map_err(|e| e.to_string())?;
        let report =
            dataset::validate_splits(&leaky, dataset::DEFAULT_SPLIT_SLACK).map_err(|e| e.to_string())?;
        let found = report.violations.iter().any(|v| match v {
            SplitViolation::CrossSplit { composition, .. } => {
                composition == "composer-0::work-0"
            }
            _ => false,
        });
        if !found {
            return Err("planted cross-split composition was not flagged".into());
        }
        Ok("954 performances / 295 compositions / 140.1 h reproduced; planted leak flagged".into())
    })
}

// ---------------------------------------------------------------------------
// 11. Augmentation

pub fn augmentation(_seed: u64) -> CheckOutcome {
    run_check("augmentation", || {
        let tone = sine(1.0, 440.0, 0.5);
        let seq = NoteSequence::from_parts(
            vec![NoteEvent { onset: 0.2, offset: 0.6, pitch: 69, velocity: 0.5 }],
            Vec::new(),
            1.0,
        )
        .map_err(|e| e.to_string())?;

        // identity parameters leave the audio untouched
        let identity = augment::augment_pair(&tone, &seq, &augment::AugmentParams::identity())
            .map_err(|e| e.to_string())?;
        let diff: Vec<f32> =
            identity.samples.iter().zip(&tone).map(|(a, b)| a - b).collect();
        let identity_rms = rms(&diff);
        if identity_rms >= 1e-6 {
            return Err(format!("identity residual RMS {identity_rms}"));
        }

        // doubling the rate doubles the pitch
        let shifted = augment::pitch_shift(&tone, 2.0).map_err(|e| e.to_string())?;
        let freq = dominant_frequency(&shifted, 16_000.0);
        if (freq - 880.0).abs() / 880.0 > 0.01 {
            return Err(format!("pitch shift by 2 landed at {freq:.2} Hz"));
        }

        // doubling time doubles length and keeps the pitch
        let stretched = augment::time_stretch(&tone, 2.0).map_err(|e| e.to_string())?;
        if stretched.len().abs_diff(2 * tone.len()) > 1 {
            return Err(format!(
                "stretch by 2: {} samples from {}",
                stretched.len(),
                tone.len()
            ));
        }
        let freq = dominant_frequency(&stretched, 16_000.0);
        if (freq - 440.0).abs() / 440.0 > 0.01 {
            return Err(format!("stretch by 2 moved the tone to {freq:.2} Hz"));
        }
        Ok(format!(
            "identity exact (residual {identity_rms:.1e}); pitch and duration scale as commanded"
        ))
    })
}

// ---------------------------------------------------------------------------
// 12. End-to-end determinism

pub fn end_to_end_determinism(seed: u64) -> CheckOutcome {
    run_check("end-to-end-determinism", || {
        let spec = ModelSpec::toy();
        let weights = ModelWeights::random(&spec, seed);
        let samples = sine(0.5, 440.0, 0.5);
        let cfg = crate::pipeline::PipelineConfig::default();

        let fingerprint = || -> Result<Vec<u8>, String> {
            let t = crate::pipeline::transcribe(&samples, 16_000, &spec, &weights, &cfg)
                .map_err(|e| e.to_string())?;
            let mut bytes =
                midi::write_notes_tsv(&t.score.to_note_sequence(0.032)).into_bytes();
            let mut roll_bytes = Vec::new();
            roll::write_roll(t.final_onset_roll(), &mut roll_bytes)
                .map_err(|e| e.to_string())?;
            bytes.extend(roll_bytes);
            let mut vel_bytes = Vec::new();
            roll::write_roll(&t.output.velocity, &mut vel_bytes).map_err(|e| e.to_string())?;
            bytes.extend(vel_bytes);
            Ok(bytes)
        };

        let baseline = fingerprint()?;
        for run in 1..5 {
            if fingerprint()? != baseline {
                return Err(format!("repeat run {run} produced different bytes"));
            }
        }
        for threads in [1usize, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            let bytes = pool.install(fingerprint)?;
            if bytes != baseline {
                return Err(format!("{threads}-thread run produced different bytes"));
            }
        }
        Ok(format!(
            "5 repeat runs and 1/4/8-thread pools all byte-identical ({} bytes)",
            baseline.len()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_names_are_unique_and_stable() {
        assert_eq!(CHECKS.len(), 12);
        let names: Vec<&str> = CHECKS.iter().map(|(n, _)| *n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn registry_names_match_reported_names() {
        // cheap checks only; the rest are covered by the acceptance target
        for (name, check) in CHECKS {
            if ["nms-properties", "alignment-rates", "sustain-resolution"].contains(name) {
                assert_eq!(check(7).name, *name);
            }
        }
    }

    #[test]
    fn a_cheap_check_runs_and_passes() {
        let outcome = nms_properties(0);
        assert!(outcome.passed, "{}", outcome.details);
        assert_eq!(outcome.name, "nms-properties");
        assert!(outcome.duration_secs >= 0.0);
    }

    #[test]
    fn failures_are_reported_not_panicked() {
        // sanity: the harness converts an Err into a failed outcome
        let outcome = run_check("demo", || Err("broken".into()));
        assert!(!outcome.passed);
        assert_eq!(outcome.details, "broken");
    }
}
