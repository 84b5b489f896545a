//! Piano-roll label preparation: quantizing note sequences onto a fixed
//! frame grid, onset prolongation, note-length clipping, segment split
//! points, and the roll file format.
//!
//! A roll is an 88 x T matrix: row k covers MIDI pitch `pitch_min + k`
//! (A0 upward), column t covers the time slice `[t*delta_t, (t+1)*delta_t)`.
//!
//! File layout (little-endian): magic `AMTR`, format version u32, kind u32,
//! rows u32, cols u32, frame period f64, then rows*cols payload values as
//! f64 in row-major order, so written rolls read back bit-identically.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::binio;
use crate::matrix::Matrix;
use crate::midi::{NoteSequence, NUM_KEYS};

/// Frames an onset activates in the prolonged label variants.
pub const PROLONG_SPAN: usize = 3;

const ROLL_MAGIC: &[u8; 4] = b"AMTR";
const ROLL_VERSION: u32 = 2;

#[derive(Debug, Error)]
pub enum RollError {
    #[error("pitch {pitch} outside the {NUM_KEYS}-key range")]
    PitchOutOfRange { pitch: u8 },
    #[error("onset at {onset} s maps to frame {frame}, roll has {frames} frames")]
    FrameOutOfRange { onset: f64, frame: usize, frames: usize },
    #[error("{0}")]
    Config(String),
    #[error("bad roll file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What a roll's cells mean. Indicator kinds are binary by construction;
/// `Velocity*` carry normalized velocities at onset cells; `Prediction`
/// holds arbitrary sigmoid outputs in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RollKind {
    Onset,
    Velocity,
    Frame,
    OnsetProlonged,
    VelocityProlonged,
    Prediction,
}

impl RollKind {
    fn code(self) -> u32 {
        match self {
            RollKind::Onset => 0,
            RollKind::Velocity => 1,
            RollKind::Frame => 2,
            RollKind::OnsetProlonged => 3,
            RollKind::VelocityProlonged => 4,
            RollKind::Prediction => 5,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => RollKind::Onset,
            1 => RollKind::Velocity,
            2 => RollKind::Frame,
            3 => RollKind::OnsetProlonged,
            4 => RollKind::VelocityProlonged,
            5 => RollKind::Prediction,
            _ => return None,
        })
    }
}

/// Grid parameters shared by quantization and decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollConfig {
    /// Frame period in seconds.
    pub delta_t: f64,
    /// MIDI pitch of row 0.
    pub pitch_min: u8,
}

impl Default for RollConfig {
    fn default() -> Self {
        Self { delta_t: 0.024, pitch_min: crate::midi::PITCH_MIN }
    }
}

impl RollConfig {
    fn check(&self) -> Result<(), RollError> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(RollError::Config(format!("frame period {} not positive", self.delta_t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    kind: RollKind,
    delta_t: f64,
    data: Matrix,
}

impl PianoRoll {
    pub fn new(kind: RollKind, frames: usize, delta_t: f64) -> Self {
        Self { kind, delta_t, data: Matrix::zeros(NUM_KEYS, frames) }
    }

    pub fn from_matrix(kind: RollKind, delta_t: f64, data: Matrix) -> Self {
        Self { kind, delta_t, data }
    }

    pub fn kind(&self) -> RollKind {
        self.kind
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn keys(&self) -> usize {
        self.data.rows()
    }

    pub fn frames(&self) -> usize {
        self.data.cols()
    }

    #[inline]
    pub fn get(&self, key: usize, frame: usize) -> f64 {
        self.data.get(key, frame)
    }

    #[inline]
    pub fn set(&mut self, key: usize, frame: usize, v: f64) {
        self.data.set(key, frame, v)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.data
    }

    pub fn is_binary(&self) -> bool {
        self.data.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn active_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.frames();
        self.data
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(i, _)| (i / cols, i % cols))
    }

    /// Plain comma-separated grid, one line per key, for eyeballing rolls.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.keys() {
            let row: Vec<String> = self.data.row(k).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// The three label rolls cut from one sequence on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRolls {
    /// Binary: 1 exactly at onset cells.
    pub onset: PianoRoll,
    /// Normalized velocity at onset cells, 0 elsewhere.
    pub velocity: PianoRoll,
    /// Binary: 1 while the note sounds.
    pub frames: PianoRoll,
}

/// Frame an onset maps to: `round(onset / delta_t)` with halves rounding up.
///
/// The quotient gets a one-nanoframe guard before rounding: ratios that are
/// exact halves in real arithmetic (0.036 / 0.024 say) come out a few ulps
/// below the half in binary and would otherwise round the wrong way.
pub fn onset_frame(onset: f64, delta_t: f64) -> usize {
    (onset / delta_t + 0.5 + 1e-9).floor() as usize
}

/// Rasterizes a sequence onto the frame grid.
///
/// The onset frame follows [`onset_frame`]. A frame belongs to a note's span
/// when its center `(t + 0.5) * delta_t` falls inside `[onset, offset)`; the
/// onset frame is always included so no note vanishes. When several onsets
/// of one pitch land on one cell the later onset's velocity wins.
///
/// With `num_frames` of `None` the grid gets `ceil(duration / delta_t)`
/// columns and an onset rounding up to the boundary is clamped into the last
/// frame. With an explicit frame count, an onset beyond the grid is an
/// error, while sounding spans are silently cut at the edge.
pub fn quantize(
    seq: &NoteSequence,
    cfg: &RollConfig,
    num_frames: Option<usize>,
) -> Result<LabelRolls, RollError> {
    cfg.check()?;
    let dt = cfg.delta_t;
    let derived = num_frames.is_none();
    let frames = match num_frames {
        Some(n) => n,
        None => (seq.duration / dt).ceil() as usize,
    };
    let mut onset = PianoRoll::new(RollKind::Onset, frames, dt);
    let mut velocity = PianoRoll::new(RollKind::Velocity, frames, dt);
    let mut frame_roll = PianoRoll::new(RollKind::Frame, frames, dt);

    for n in &seq.notes {
        let key = key_for_pitch(n.pitch, cfg)?;
        let mut f = onset_frame(n.onset, dt);
        if f >= frames {
            if derived && f == frames && frames > 0 {
                f = frames - 1;
            } else {
                return Err(RollError::FrameOutOfRange { onset: n.onset, frame: f, frames });
            }
        }
        onset.set(key, f, 1.0);
        velocity.set(key, f, n.velocity);
        frame_roll.set(key, f, 1.0);

        let lo = (n.onset / dt).floor().max(0.0) as usize;
        let hi = ((n.offset / dt).ceil() as usize).min(frames);
        for t in lo.saturating_sub(1)..hi {
            let center = (t as f64 + 0.5) * dt;
            if center >= n.onset && center < n.offset {
                frame_roll.set(key, t, 1.0);
            }
        }
    }
    Ok(LabelRolls { onset, velocity, frames: frame_roll })
}

fn key_for_pitch(pitch: u8, cfg: &RollConfig) -> Result<usize, RollError> {
    let key = pitch as i32 - cfg.pitch_min as i32;
    if !(0..NUM_KEYS as i32).contains(&key) {
        return Err(RollError::PitchOutOfRange { pitch });
    }
    Ok(key as usize)
}

/// Spreads every onset over [`PROLONG_SPAN`] frames (clipped at the grid
/// edge). Velocities spread with their onset; where spans of one key
/// overlap, the later onset overwrites.
pub fn prolong(
    onset: &PianoRoll,
    velocity: &PianoRoll,
) -> Result<(PianoRoll, PianoRoll), RollError> {
    if onset.kind() != RollKind::Onset || velocity.kind() != RollKind::Velocity {
        return Err(RollError::Config(format!(
            "prolong expects an onset and a velocity roll, got {:?} and {:?}",
            onset.kind(),
            velocity.kind()
        )));
    }
    if onset.frames() != velocity.frames() || onset.keys() != velocity.keys() {
        return Err(RollError::Config("onset and velocity rolls differ in shape".into()));
    }
    let frames = onset.frames();
    let mut on3 = PianoRoll::new(RollKind::OnsetProlonged, frames, onset.delta_t());
    let mut vel3 = PianoRoll::new(RollKind::VelocityProlonged, frames, velocity.delta_t());
    for key in 0..onset.keys() {
        for t in 0..frames {
            if onset.get(key, t) == 0.0 {
                continue;
            }
            let v = velocity.get(key, t);
            for tt in t..(t + PROLONG_SPAN).min(frames) {
                on3.set(key, tt, 1.0);
                vel3.set(key, tt, v);
            }
        }
    }
    Ok((on3, vel3))
}

/// Caps every note length at `max_len` seconds, leaving onsets alone.
pub fn clip_note_lengths(seq: &NoteSequence, max_len: f64) -> Result<NoteSequence, RollError> {
    if !(max_len.is_finite() && max_len > 0.0) {
        return Err(RollError::Config(format!("length cap {max_len} not positive")));
    }
    let notes = seq
        .notes
        .iter()
        .map(|n| {
            let mut n = *n;
            n.offset = n.offset.min(n.onset + max_len);
            n
        })
        .collect();
    NoteSequence::from_parts(notes, seq.pedals.clone(), seq.duration)
        .map_err(|e| RollError::Config(e.to_string()))
}

/// Picks cut points for slicing a long recording into roughly `target_seconds`
/// pieces. Around every multiple of the target the quietest spot within one
/// second is located (10 ms energy window) and the cut snaps to the nearest
/// sign change there; a window with no sign change (silence or DC) falls
/// back to the exact multiple with a warning.
///
/// Returned sample indices are strictly increasing and exclude 0 and the end.
pub fn split_points(samples: &[f32], sample_rate: u32, target_seconds: f64) -> Vec<usize> {
    assert!(target_seconds > 0.0 && sample_rate > 0);
    let sr = sample_rate as usize;
    let stride = (target_seconds * sample_rate as f64).round() as usize;
    if stride == 0 || samples.len() <= stride {
        return Vec::new();
    }
    let energy_win = sr / 100;
    // Prefix sums of squared samples; window energy is one subtraction.
    let mut prefix = Vec::with_capacity(samples.len() + 1);
    prefix.push(0.0f64);
    for &s in samples {
        prefix.push(prefix.last().unwrap() + s as f64 * s as f64);
    }
    let energy = |at: usize| {
        let lo = at.saturating_sub(energy_win);
        let hi = (at + energy_win + 1).min(samples.len());
        prefix[hi] - prefix[lo]
    };
    let mut points = Vec::new();
    let mut prev = 0usize;
    let mut center = stride;
    while center + 1 < samples.len() {
        let lo = center.saturating_sub(sr).max(prev + 1);
        let hi = (center + sr).min(samples.len() - 1);
        let quietest = (lo..=hi)
            .min_by(|&a, &b| energy(a).total_cmp(&energy(b)))
            .unwrap_or(center);
        let cut = match nearest_sign_change(samples, quietest, lo, hi) {
            Some(i) => i,
            None => {
                log::warn!(
                    "no sign change within 1 s of sample {center}, cutting at the exact multiple"
                );
                center
            }
        };
        if cut > prev && cut < samples.len() {
            points.push(cut);
            prev = cut;
        }
        center += stride;
    }
    points
}

fn nearest_sign_change(samples: &[f32], from: usize, lo: usize, hi: usize) -> Option<usize> {
    // A sample sitting exactly on zero counts: silence is the ideal cut.
    let crosses = |i: usize| {
        i > 0 && {
            let (a, b) = (samples[i - 1], samples[i]);
            (a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0)
        }
    };
    (0..).map_while(|d| {
        let below = from.checked_sub(d).filter(|&i| i >= lo);
        let above = Some(from + d).filter(|&i| i <= hi);
        if below.is_none() && above.is_none() {
            return None;
        }
        Some([below, above])
    })
    .flatten()
    .flatten()
    .find(|&i| crosses(i))
}

// ---------------------------------------------------------------------------
// File format

pub fn write_roll<W: Write>(roll: &PianoRoll, w: &mut W) -> io::Result<()> {
    w.write_all(ROLL_MAGIC)?;
    binio::write_u32(w, ROLL_VERSION)?;
    binio::write_u32(w, roll.kind.code())?;
    binio::write_u32(w, roll.keys() as u32)?;
    binio::write_u32(w, roll.frames() as u32)?;
    binio::write_f64(w, roll.delta_t)?;
    // Cells are stored at full width so that a written roll reads back
    // bit-identically — predictions carry more precision than f32.
    for &v in roll.data.data() {
        binio::write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_roll<R: Read>(r: &mut R) -> Result<PianoRoll, RollError> {
    let magic = binio::read_magic(r)?;
    if &magic != ROLL_MAGIC {
        return Err(RollError::Format(format!("magic {magic:?} is not {ROLL_MAGIC:?}")));
    }
    let version = binio::read_u32(r)?;
    if version != ROLL_VERSION {
        return Err(RollError::Format(format!("unsupported version {version}")));
    }
    let kind = RollKind::from_code(binio::read_u32(r)?)
        .ok_or_else(|| RollError::Format("unknown roll kind".into()))?;
    let rows = binio::read_u32(r)? as usize;
    let cols = binio::read_u32(r)? as usize;
    let delta_t = binio::read_f64(r)?;
    if rows != NUM_KEYS {
        return Err(RollError::Format(format!("expected {NUM_KEYS} rows, found {rows}")));
    }
    if !(delta_t.is_finite() && delta_t > 0.0) {
        return Err(RollError::Format(format!("bad frame period {delta_t}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(binio::read_f64(r)?);
    }
    Ok(PianoRoll { kind, delta_t, data: Matrix::from_vec(rows, cols, data) })
}

pub fn save_roll(roll: &PianoRoll, path: impl AsRef<Path>) -> Result<(), RollError> {
    let mut buf = Vec::new();
    write_roll(roll, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_roll(path: impl AsRef<Path>) -> Result<PianoRoll, RollError> {
    let bytes = std::fs::read(path)?;
    read_roll(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::NoteEvent;
    use proptest::prelude::*;

    fn seq(notes: Vec<NoteEvent>, duration: f64) -> NoteSequence {
        NoteSequence::from_parts(notes, Vec::new(), duration).unwrap()
    }

    fn note(onset: f64, offset: f64, pitch: u8, velocity: f64) -> NoteEvent {
        NoteEvent { onset, offset, pitch, velocity }
    }

    #[test]
    fn onset_frame_rounds_half_away_from_zero() {
        // 0.036 / 0.024 = 1.5 exactly.
        let s = seq(vec![note(0.036, 0.1, 60, 0.5)], 0.2);
        let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
        let key = 60 - 21;
        assert_eq!(rolls.onset.get(key, 2), 1.0);
        assert_eq!(rolls.onset.get(key, 1), 0.0);
    }

    #[test]
    fn frame_roll_uses_centers_with_forced_onset() {
        let s = seq(vec![note(0.05, 0.124, 60, 0.5)], 0.2);
        let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
        let key = 60 - 21;
        // Centers 0.060, 0.084, 0.108 fall in [0.05, 0.124); 0.132 does not.
        let active: Vec<usize> =
            (0..rolls.frames.frames()).filter(|&t| rolls.frames.get(key, t) == 1.0).collect();
        assert_eq!(active, vec![2, 3, 4]);
    }

    #[test]
    fn short_note_keeps_its_onset_frame() {
        // Too short to cover any frame center; the onset frame is forced.
        let s = seq(vec![note(0.070, 0.082, 72, 0.9)], 0.2);
        let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
        let key = 72 - 21;
        assert_eq!(rolls.frames.get(key, 3), 1.0);
        assert_eq!(rolls.onset.get(key, 3), 1.0);
        assert_eq!(rolls.velocity.get(key, 3), 0.9);
    }

    #[test]
    fn derived_grid_clamps_boundary_onset_into_last_frame() {
        // duration 0.48 gives 20 frames; onset 0.47 rounds to frame 20.
        let s = seq(vec![note(0.47, 0.48, 60, 0.5)], 0.48);
        let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
        assert_eq!(rolls.onset.frames(), 20);
        assert_eq!(rolls.onset.get(60 - 21, 19), 1.0);
    }

    #[test]
    fn explicit_grid_rejects_out_of_range_onset() {
        let s = seq(vec![note(0.47, 0.48, 60, 0.5)], 0.48);
        let err = quantize(&s, &RollConfig::default(), Some(10)).unwrap_err();
        assert!(matches!(err, RollError::FrameOutOfRange { frame: 20, frames: 10, .. }));
    }

    #[test]
    fn pitch_outside_keyboard_rejected() {
        let s = seq(vec![note(0.0, 0.1, 20, 0.5)], 0.2);
        assert!(matches!(
            quantize(&s, &RollConfig::default(), None),
            Err(RollError::PitchOutOfRange { pitch: 20 })
        ));
    }

    #[test]
    fn same_cell_collision_keeps_later_onset_velocity() {
        // Both onsets round to frame 1.
        let s = seq(
            vec![note(0.026, 0.2, 60, 0.3), note(0.030, 0.25, 60, 0.8)],
            0.3,
        );
        let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
        assert_eq!(rolls.velocity.get(60 - 21, 1), 0.8);
    }

    #[test]
    fn prolong_fixture_later_onset_overwrites_overlap() {
        let dt = 0.024;
        let mut onset = PianoRoll::new(RollKind::Onset, 12, dt);
        let mut velocity = PianoRoll::new(RollKind::Velocity, 12, dt);
        onset.set(10, 5, 1.0);
        velocity.set(10, 5, 0.3);
        onset.set(10, 6, 1.0);
        velocity.set(10, 6, 0.9);
        let (on3, vel3) = prolong(&onset, &velocity).unwrap();
        for t in 5..=8 {
            assert_eq!(on3.get(10, t), 1.0);
        }
        assert_eq!(on3.get(10, 4), 0.0);
        assert_eq!(on3.get(10, 9), 0.0);
        assert_eq!(vel3.get(10, 5), 0.3);
        for t in 6..=8 {
            assert_eq!(vel3.get(10, t), 0.9, "frame {t}");
        }
    }

    #[test]
    fn prolong_clips_at_grid_edge() {
        let mut onset = PianoRoll::new(RollKind::Onset, 4, 0.024);
        let velocity = {
            let mut v = PianoRoll::new(RollKind::Velocity, 4, 0.024);
            v.set(0, 3, 0.5);
            v
        };
        onset.set(0, 3, 1.0);
        let (on3, _) = prolong(&onset, &velocity).unwrap();
        assert_eq!(on3.get(0, 3), 1.0);
        assert_eq!((0..4).map(|t| on3.get(0, t)).sum::<f64>(), 1.0);
    }

    #[test]
    fn clip_note_lengths_caps_only_long_notes() {
        let s = seq(
            vec![note(0.0, 1.0, 60, 0.5), note(0.5, 0.52, 61, 0.5)],
            1.0,
        );
        let clipped = clip_note_lengths(&s, 0.032).unwrap();
        assert!((clipped.notes[0].offset - 0.032).abs() < 1e-12);
        assert!((clipped.notes[1].offset - 0.52).abs() < 1e-12);
    }

    #[test]
    fn split_points_snap_to_quiet_gap() {
        // 3 s of loud tone with 100 ms of silence around 1 s.
        let sr = 16000usize;
        let mut samples: Vec<f32> = (0..3 * sr)
            .map(|n| (2.0 * std::f64::consts::PI * 220.0 * n as f64 / sr as f64).sin() as f32)
            .collect();
        let gap = (sr as f64 * 0.95) as usize..(sr as f64 * 1.05) as usize;
        for s in &mut samples[gap.clone()] {
            *s = 0.0;
        }
        let points = split_points(&samples, sr as u32, 1.0);
        assert!(!points.is_empty());
        assert!(gap.contains(&points[0]), "cut {} not in the silent gap", points[0]);
    }

    #[test]
    fn split_points_dc_falls_back_to_exact_multiples() {
        let samples = vec![0.25f32; 32000];
        let points = split_points(&samples, 16000, 1.0);
        assert_eq!(points, vec![16000]);
    }

    #[test]
    fn roll_file_round_trip_and_bad_magic() {
        let mut roll = PianoRoll::new(RollKind::Velocity, 7, 0.024);
        roll.set(3, 2, 0.5);
        roll.set(87, 6, 1.0);
        let mut buf = Vec::new();
        write_roll(&roll, &mut buf).unwrap();
        let back = read_roll(&mut buf.as_slice()).unwrap();
        assert_eq!(back, roll);

        buf[0] = b'X';
        assert!(matches!(read_roll(&mut buf.as_slice()), Err(RollError::Format(_))));
    }

    #[test]
    fn truncated_roll_file_is_an_io_error() {
        let roll = PianoRoll::new(RollKind::Onset, 5, 0.024);
        let mut buf = Vec::new();
        write_roll(&roll, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_roll(&mut buf.as_slice()), Err(RollError::Io(_))));
    }

    prop_compose! {
        fn arb_label_seq()(raw in prop::collection::vec(
            (0.0f64..5.0, 0.012f64..1.5, 21u8..=108, 0.05f64..=1.0), 1..30,
        )) -> NoteSequence {
            let notes = raw.into_iter().map(|(onset, len, pitch, vel)| NoteEvent {
                onset, offset: onset + len, pitch, velocity: vel,
            }).collect();
            NoteSequence::from_parts(notes, Vec::new(), 7.0).unwrap()
        }
    }

    proptest! {
        #[test]
        fn indicator_rolls_stay_binary(s in arb_label_seq()) {
            let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
            prop_assert!(rolls.onset.is_binary());
            prop_assert!(rolls.frames.is_binary());
            let (on3, vel3) = prolong(&rolls.onset, &rolls.velocity).unwrap();
            prop_assert!(on3.is_binary());
            prop_assert!(vel3.matrix().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn velocity_cells_sit_on_onset_cells(s in arb_label_seq()) {
            let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
            for (k, t) in rolls.velocity.active_cells() {
                prop_assert_eq!(rolls.onset.get(k, t), 1.0);
            }
            // Every onset cell lies inside the sounding span.
            for (k, t) in rolls.onset.active_cells() {
                prop_assert_eq!(rolls.frames.get(k, t), 1.0);
            }
        }

        #[test]
        fn single_note_activity_matches_length_within_one_frame(
            onset in 0.0f64..5.0,
            len in 0.012f64..2.0,
            pitch in 21u8..=108,
        ) {
            let dt = 0.024;
            let s = seq(vec![note(onset, onset + len, pitch, 0.5)], 8.0);
            let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
            let key = (pitch - 21) as usize;
            let active = (0..rolls.frames.frames())
                .filter(|&t| rolls.frames.get(key, t) == 1.0)
                .count();
            prop_assert!((active as f64 * dt - len).abs() <= dt + 1e-12,
                "{} frames active for a {} s note", active, len);
        }

        #[test]
        fn prolonged_cell_count_bounded_by_span(s in arb_label_seq()) {
            let rolls = quantize(&s, &RollConfig::default(), None).unwrap();
            let (on3, _) = prolong(&rolls.onset, &rolls.velocity).unwrap();
            let n = rolls.onset.active_cells().count();
            let n3 = on3.active_cells().count();
            prop_assert!(n3 >= n && n3 <= n * PROLONG_SPAN);
        }

        #[test]
        fn onset_times_survive_the_grid_within_one_frame(s in arb_label_seq()) {
            let cfg = RollConfig::default();
            let rolls = quantize(&s, &cfg, None).unwrap();
            for n in &s.notes {
                let key = (n.pitch - cfg.pitch_min) as usize;
                let hit = (0..rolls.onset.frames()).any(|t| {
                    rolls.onset.get(key, t) == 1.0
                        && (t as f64 * cfg.delta_t - n.onset).abs() <= cfg.delta_t
                });
                prop_assert!(hit, "no onset cell within a frame of {} s", n.onset);
            }
        }

        #[test]
        fn roll_serialization_round_trips(cells in prop::collection::vec(
            (0usize..88, 0usize..20, 0.0f64..=1.0), 0..40,
        )) {
            let mut roll = PianoRoll::new(RollKind::Prediction, 20, 0.024);
            for (k, t, v) in cells {
                roll.set(k, t, v);
            }
            let mut buf = Vec::new();
            write_roll(&roll, &mut buf).unwrap();
            let back = read_roll(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, roll);
        }
    }
}
