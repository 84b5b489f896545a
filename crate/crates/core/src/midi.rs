//! Standard MIDI file parsing and writing, note-event extraction, and
//! sustain-pedal resolution.
//!
//! Parsing turns raw SMF bytes into a [`NoteSequence`]: notes with onset and
//! offset in seconds, velocities normalized to `[0, 1]`, and the raw sustain
//! pedal trace. Recoverable oddities (unclosed notes, zero-length notes,
//! orphan note-offs) become warnings rather than errors; structural damage
//! fails with the byte offset where parsing stopped.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

/// Lowest piano key (A0) as a MIDI pitch number.
pub const PITCH_MIN: u8 = 21;
/// Highest piano key (C8) as a MIDI pitch number.
pub const PITCH_MAX: u8 = 108;
/// Number of piano keys covered by the roll representations.
pub const NUM_KEYS: usize = 88;

const DEFAULT_TEMPO: u32 = 500_000; // microseconds per quarter note
const WRITE_PPQ: u16 = 480;
const SUSTAIN_CONTROLLER: u8 = 64;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("malformed midi at byte {offset}: {what}")]
    Parse { offset: usize, what: String },
    #[error("cannot serialize sequence: {0}")]
    Serialize(String),
    #[error("bad note table at line {line}: {what}")]
    Table { line: usize, what: String },
    #[error("invalid note sequence: {0}")]
    Invalid(String),
}

/// One note: half-open interval `[onset, offset)` in seconds, MIDI pitch,
/// velocity normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub onset: f64,
    pub offset: f64,
    pub pitch: u8,
    pub velocity: f64,
}

/// Sustain-pedal state change. `engaged` follows the controller convention:
/// values of 64 and above press the pedal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedalEvent {
    pub time: f64,
    pub engaged: bool,
}

/// A performance: notes sorted by `(onset, pitch)`, the pedal trace sorted by
/// time (releases before presses on ties), and the total duration in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteSequence {
    pub notes: Vec<NoteEvent>,
    pub pedals: Vec<PedalEvent>,
    pub duration: f64,
}

impl NoteSequence {
    pub fn empty() -> Self {
        Self { notes: Vec::new(), pedals: Vec::new(), duration: 0.0 }
    }

    /// Sorts, computes a duration covering every event, and validates.
    pub fn from_parts(
        mut notes: Vec<NoteEvent>,
        mut pedals: Vec<PedalEvent>,
        duration: f64,
    ) -> Result<Self, MidiError> {
        notes.sort_by(|a, b| {
            a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch))
        });
        pedals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.engaged.cmp(&b.engaged)));
        let end = notes
            .iter()
            .map(|n| n.offset)
            .chain(pedals.iter().map(|p| p.time))
            .fold(duration, f64::max);
        let seq = Self { notes, pedals, duration: end };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), MidiError> {
        let mut prev: Option<&NoteEvent> = None;
        for n in &self.notes {
            if !n.onset.is_finite() || !n.offset.is_finite() || n.onset < 0.0 {
                return Err(MidiError::Invalid(format!(
                    "non-finite or negative note time (onset {}, offset {})",
                    n.onset, n.offset
                )));
            }
            if n.offset <= n.onset {
                return Err(MidiError::Invalid(format!(
                    "note at {} s has non-positive length",
                    n.onset
                )));
            }
            if !(0.0..=1.0).contains(&n.velocity) {
                return Err(MidiError::Invalid(format!(
                    "velocity {} outside [0, 1]",
                    n.velocity
                )));
            }
            if self.duration < n.offset {
                return Err(MidiError::Invalid(format!(
                    "duration {} shorter than note offset {}",
                    self.duration, n.offset
                )));
            }
            if let Some(p) = prev {
                if (p.onset, p.pitch) > (n.onset, n.pitch) {
                    return Err(MidiError::Invalid("notes not sorted by (onset, pitch)".into()));
                }
            }
            prev = Some(n);
        }
        for w in self.pedals.windows(2) {
            if w[0].time > w[1].time {
                return Err(MidiError::Invalid("pedal events not sorted by time".into()));
            }
        }
        Ok(())
    }
}

/// Parse result: the extracted sequence plus human-readable warnings for
/// everything that was repaired along the way.
#[derive(Debug, Clone)]
pub struct ParsedMidi {
    pub sequence: NoteSequence,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// SMF reading

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn err(&self, what: impl Into<String>) -> MidiError {
        MidiError::Parse { offset: self.pos, what: what.into() }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn u16be(&mut self) -> Result<u16, MidiError> {
        Ok(((self.u8()? as u16) << 8) | self.u8()? as u16)
    }

    fn u32be(&mut self) -> Result<u32, MidiError> {
        Ok(((self.u16be()? as u32) << 16) | self.u16be()? as u32)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| self.err(format!("{n} bytes requested past end of data")))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for i in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
            if i == 3 {
                break;
            }
        }
        Err(self.err("variable-length quantity longer than four bytes"))
    }
}

#[derive(Debug, Clone, Copy)]
enum TrackEvent {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Pedal { engaged: bool },
    Tempo { us_per_quarter: u32 },
}

/// Converts absolute ticks to seconds via piecewise-constant tempo segments.
struct TempoMap {
    // (start tick, seconds at start, seconds per tick)
    segments: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn from_changes(ppq: u16, changes: &[(u64, u32)]) -> Self {
        let mut dedup: BTreeMap<u64, u32> = BTreeMap::new();
        for &(tick, us) in changes {
            dedup.insert(tick, us); // later event at the same tick wins
        }
        dedup.entry(0).or_insert(DEFAULT_TEMPO);
        let mut segments = Vec::with_capacity(dedup.len());
        let mut seconds = 0.0f64;
        let mut prev_tick = 0u64;
        let mut prev_rate = 0.0f64;
        for (&tick, &us) in &dedup {
            seconds += (tick - prev_tick) as f64 * prev_rate;
            prev_rate = us as f64 / (ppq as f64 * 1e6);
            segments.push((tick, seconds, prev_rate));
            prev_tick = tick;
        }
        Self { segments }
    }

    fn smpte(seconds_per_tick: f64) -> Self {
        Self { segments: vec![(0, 0.0, seconds_per_tick)] }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|s| s.0 <= tick) - 1;
        let (start, base, rate) = self.segments[idx];
        base + (tick - start) as f64 * rate
    }
}

/// Parses a standard MIDI file. All tracks are merged; sustain state is taken
/// from controller 64 on any channel.
pub fn parse_midi(bytes: &[u8]) -> Result<ParsedMidi, MidiError> {
    let mut cur = Cursor::new(bytes);
    if cur.bytes(4)? != b"MThd" {
        return Err(MidiError::Parse { offset: 0, what: "missing MThd header".into() });
    }
    let header_len = cur.u32be()?;
    if header_len < 6 {
        return Err(cur.err(format!("header length {header_len} below 6")));
    }
    let _format = cur.u16be()?;
    let ntrks = cur.u16be()?;
    let division = cur.u16be()?;
    cur.bytes(header_len as usize - 6)?;

    let mut warnings = Vec::new();
    let tempo_aware = division & 0x8000 == 0;
    let smpte_rate = if tempo_aware {
        if division == 0 {
            return Err(cur.err("zero ticks per quarter note"));
        }
        0.0
    } else {
        let fps = match (division >> 8) as u8 as i8 {
            -29 => 29.97,
            neg => -(neg as f64),
        };
        let tpf = (division & 0xFF) as f64;
        if fps <= 0.0 || tpf == 0.0 {
            return Err(cur.err(format!("bad SMPTE division {division:#06x}")));
        }
        1.0 / (fps * tpf)
    };

    let mut tracks: Vec<(Vec<(u64, TrackEvent)>, u64)> = Vec::new();
    for t in 0..ntrks {
        if cur.peek().is_none() {
            warnings.push(format!("header promises {ntrks} tracks, file ends after {t}"));
            break;
        }
        let chunk_start = cur.pos;
        let tag = cur.bytes(4)?;
        let len = cur.u32be()? as usize;
        if tag != b"MTrk" {
            // Unknown chunk types are skipped per the SMF spec.
            cur.bytes(len)?;
            continue;
        }
        let body_end = chunk_start + 8 + len;
        if body_end > bytes.len() {
            return Err(MidiError::Parse {
                offset: chunk_start + 4,
                what: format!("track length {len} runs past end of file"),
            });
        }
        let (events, end_tick) = read_track(&mut cur, body_end, &mut warnings)?;
        tracks.push((events, end_tick));
        cur.pos = body_end;
    }

    let mut tempo_changes = Vec::new();
    for (events, _) in &tracks {
        for &(tick, ev) in events {
            if let TrackEvent::Tempo { us_per_quarter } = ev {
                tempo_changes.push((tick, us_per_quarter));
            }
        }
    }
    tempo_changes.sort_by_key(|&(tick, _)| tick);
    let map = if tempo_aware {
        TempoMap::from_changes(division, &tempo_changes)
    } else {
        if !tempo_changes.is_empty() {
            warnings.push("tempo events ignored under SMPTE timing".into());
        }
        TempoMap::smpte(smpte_rate)
    };

    let mut notes = Vec::new();
    let mut pedals = Vec::new();
    for (events, end_tick) in &tracks {
        pair_track_notes(events, *end_tick, &map, &mut notes, &mut pedals, &mut warnings);
    }
    let end = tracks.iter().map(|t| map.seconds(t.1)).fold(0.0, f64::max);

    let sequence = NoteSequence::from_parts(notes, pedals, end)?;
    Ok(ParsedMidi { sequence, warnings })
}

/// Returns the track's events plus its final tick (the end-of-track time).
fn read_track(
    cur: &mut Cursor,
    body_end: usize,
    warnings: &mut Vec<String>,
) -> Result<(Vec<(u64, TrackEvent)>, u64), MidiError> {
    let mut events = Vec::new();
    let mut abs_tick = 0u64;
    let mut running: Option<u8> = None;
    while cur.pos < body_end {
        abs_tick += cur.vlq()? as u64;
        let lead = cur.peek().ok_or_else(|| cur.err("unexpected end of track"))?;
        let status = if lead >= 0x80 {
            cur.u8()?;
            // System and meta messages cancel running status.
            running = if lead < 0xF0 { Some(lead) } else { None };
            lead
        } else {
            running.ok_or_else(|| cur.err("data byte with no running status"))?
        };
        let channel = status & 0x0F;
        match status & 0xF0 {
            0x80 => {
                let pitch = cur.u8()?;
                let _velocity = cur.u8()?;
                events.push((abs_tick, TrackEvent::NoteOff { channel, pitch }));
            }
            0x90 => {
                let pitch = cur.u8()?;
                let velocity = cur.u8()?;
                let ev = if velocity == 0 {
                    TrackEvent::NoteOff { channel, pitch }
                } else {
                    TrackEvent::NoteOn { channel, pitch, velocity }
                };
                events.push((abs_tick, ev));
            }
            0xA0 | 0xE0 => {
                cur.bytes(2)?;
            }
            0xB0 => {
                let controller = cur.u8()?;
                let value = cur.u8()?;
                if controller == SUSTAIN_CONTROLLER {
                    events.push((abs_tick, TrackEvent::Pedal { engaged: value >= 64 }));
                }
            }
            0xC0 | 0xD0 => {
                cur.bytes(1)?;
            }
            0xF0 => match status {
                0xF0 | 0xF7 => {
                    let len = cur.vlq()? as usize;
                    cur.bytes(len)?;
                }
                0xFF => {
                    let meta = cur.u8()?;
                    let len = cur.vlq()? as usize;
                    let data = cur.bytes(len)?;
                    match meta {
                        0x51 if len == 3 => {
                            let us = ((data[0] as u32) << 16)
                                | ((data[1] as u32) << 8)
                                | data[2] as u32;
                            events.push((abs_tick, TrackEvent::Tempo { us_per_quarter: us }));
                        }
                        0x51 => warnings.push(format!(
                            "tempo meta event with length {len} ignored"
                        )),
                        0x2F => return Ok((events, abs_tick)),
                        _ => {}
                    }
                }
                other => {
                    return Err(cur.err(format!("unsupported status byte {other:#04x}")));
                }
            },
            _ => unreachable!("status bytes below 0x80 resolved via running status"),
        }
    }
    warnings.push("track ended without an end-of-track event".into());
    Ok((events, abs_tick))
}

/// First-in-first-out pairing of note-ons with note-offs, independently per
/// (channel, pitch). Overlapping re-strikes of one key therefore close in
/// onset order.
fn pair_track_notes(
    events: &[(u64, TrackEvent)],
    end_tick: u64,
    map: &TempoMap,
    notes: &mut Vec<NoteEvent>,
    pedals: &mut Vec<PedalEvent>,
    warnings: &mut Vec<String>,
) {
    let mut open: BTreeMap<(u8, u8), VecDeque<(u64, u8)>> = BTreeMap::new();
    let mut push_note = |on_tick: u64, off_tick: u64, pitch: u8, velocity: u8,
                         warnings: &mut Vec<String>| {
        if off_tick == on_tick {
            warnings.push(format!(
                "zero-length note (pitch {pitch}) at tick {on_tick} dropped"
            ));
            return;
        }
        notes.push(NoteEvent {
            onset: map.seconds(on_tick),
            offset: map.seconds(off_tick),
            pitch,
            velocity: velocity as f64 / 127.0,
        });
    };
    for &(tick, ev) in events {
        match ev {
            TrackEvent::NoteOn { channel, pitch, velocity } => {
                open.entry((channel, pitch)).or_default().push_back((tick, velocity));
            }
            TrackEvent::NoteOff { channel, pitch } => {
                match open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                    Some((on_tick, velocity)) => {
                        push_note(on_tick, tick, pitch, velocity, warnings)
                    }
                    None => warnings.push(format!(
                        "note-off with no open note (pitch {pitch}) at tick {tick}"
                    )),
                }
            }
            TrackEvent::Pedal { engaged } => {
                pedals.push(PedalEvent { time: map.seconds(tick), engaged });
            }
            TrackEvent::Tempo { .. } => {}
        }
    }
    for ((_, pitch), queue) in open {
        for (on_tick, velocity) in queue {
            warnings.push(format!(
                "note (pitch {pitch}) still open at end of track, closed at tick {end_tick}"
            ));
            push_note(on_tick, end_tick, pitch, velocity, warnings);
        }
    }
}

// ---------------------------------------------------------------------------
// SMF writing

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7F) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut b = stack[i];
        if i > 0 {
            b |= 0x80;
        }
        out.push(b);
    }
}

/// Serializes a sequence as a single-track (format 0) file at 120 BPM with
/// 480 ticks per quarter note, i.e. 960 ticks per second.
///
/// Event times round to the nearest tick; notes that would collapse to zero
/// length are stretched to one tick so they survive re-parsing.
pub fn write_midi(seq: &NoteSequence) -> Result<Vec<u8>, MidiError> {
    seq.validate().map_err(|e| MidiError::Serialize(e.to_string()))?;
    for n in &seq.notes {
        if n.pitch > 127 {
            return Err(MidiError::Serialize(format!("pitch {} not representable", n.pitch)));
        }
    }
    let tick = |t: f64| (t * 2.0 * WRITE_PPQ as f64).round() as u64;

    // class orders simultaneous events: offs, then pedal changes, then ons,
    // which keeps first-in-first-out pairing stable on re-parse.
    let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
    for n in &seq.notes {
        let on = tick(n.onset);
        let off = tick(n.offset).max(on + 1);
        let byte = ((n.velocity * 127.0).round() as u8).clamp(1, 127);
        events.push((on, 2, vec![0x90, n.pitch, byte]));
        events.push((off, 0, vec![0x80, n.pitch, 0]));
    }
    for p in &seq.pedals {
        let value = if p.engaged { 127 } else { 0 };
        events.push((tick(p.time), 1, vec![0xB0, SUSTAIN_CONTROLLER, value]));
    }
    events.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut body = Vec::new();
    push_vlq(&mut body, 0);
    body.extend_from_slice(&[0xFF, 0x51, 0x03]);
    body.extend_from_slice(&DEFAULT_TEMPO.to_be_bytes()[1..]);
    let mut prev = 0u64;
    for (at, _, bytes) in &events {
        push_vlq(&mut body, (at - prev) as u32);
        body.extend_from_slice(bytes);
        prev = *at;
    }
    let end = tick(seq.duration).max(prev);
    push_vlq(&mut body, (end - prev) as u32);
    body.extend_from_slice(&[0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(body.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_PPQ.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sustain resolution

/// Engaged-pedal intervals, half-open `[press, release)`, with touching
/// intervals merged. The half-open convention resolves a note release at the
/// exact pedal-release instant as undamped; merging makes an instant
/// re-press read as continuous sustain, which keeps resolution idempotent.
fn pedal_intervals(pedals: &[PedalEvent]) -> Vec<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = None;
    for p in pedals {
        match (open, p.engaged) {
            (None, true) => open = Some(p.time),
            (Some(start), false) => {
                if p.time > start {
                    match intervals.last_mut() {
                        Some(last) if last.1 >= start => last.1 = p.time,
                        _ => intervals.push((start, p.time)),
                    }
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        match intervals.last_mut() {
            Some(last) if last.1 >= start => last.1 = f64::INFINITY,
            _ => intervals.push((start, f64::INFINITY)),
        }
    }
    intervals
}

/// Applies the sustain pedal to note lengths: a note whose offset falls
/// inside an engaged interval keeps sounding until the pedal is released,
/// the same key is struck again, or the sequence ends, whichever is first.
///
/// Onsets, velocities, the pedal trace, and the duration are untouched, so
/// the operation is idempotent and never shortens a note.
pub fn resolve_sustain(seq: &NoteSequence) -> NoteSequence {
    let intervals = pedal_intervals(&seq.pedals);
    if intervals.is_empty() {
        return seq.clone();
    }

    // Onsets per pitch, for the re-strike cutoff.
    let mut onsets_by_pitch: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for n in &seq.notes {
        onsets_by_pitch.entry(n.pitch).or_default().push(n.onset);
    }

    let mut notes = seq.notes.clone();
    for n in &mut notes {
        let idx = intervals.partition_point(|iv| iv.0 <= n.offset);
        if idx == 0 {
            continue;
        }
        let (_, release) = intervals[idx - 1];
        if n.offset >= release {
            continue;
        }
        let onsets = &onsets_by_pitch[&n.pitch];
        let next_strike = onsets
            .get(onsets.partition_point(|&o| o <= n.onset))
            .copied()
            .unwrap_or(f64::INFINITY);
        let extended = release.min(next_strike).min(seq.duration);
        n.offset = n.offset.max(extended);
    }
    NoteSequence { notes, pedals: seq.pedals.clone(), duration: seq.duration }
}

// ---------------------------------------------------------------------------
// Note tables

/// Renders the tab-separated note table: one header line, then one line per
/// note with seconds and the normalized velocity at six decimals.
pub fn write_notes_tsv(seq: &NoteSequence) -> String {
    let mut out = String::from("onset_sec\toffset_sec\tpitch\tvelocity\n");
    for n in &seq.notes {
        let _ = writeln!(
            out,
            "{:.6}\t{:.6}\t{}\t{:.6}",
            n.onset, n.offset, n.pitch, n.velocity
        );
    }
    out
}

/// Reads a note table. The header line is optional; errors carry the
/// one-based line number. Pedal information is not part of the format, so the
/// result has an empty pedal trace.
pub fn read_notes_tsv(text: &str) -> Result<NoteSequence, MidiError> {
    let mut notes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("onset_sec")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(MidiError::Table {
                line: line_no,
                what: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |i: usize, what: &str| -> Result<f64, MidiError> {
            fields[i].parse::<f64>().map_err(|_| MidiError::Table {
                line: line_no,
                what: format!("bad {what} {:?}", fields[i]),
            })
        };
        let onset = num(0, "onset")?;
        let offset = num(1, "offset")?;
        let pitch: u8 = fields[2].parse().map_err(|_| MidiError::Table {
            line: line_no,
            what: format!("bad pitch {:?}", fields[2]),
        })?;
        let velocity = num(3, "velocity")?;
        notes.push(NoteEvent { onset, offset, pitch, velocity });
    }
    NoteSequence::from_parts(notes, Vec::new(), 0.0)
        .map_err(|e| MidiError::Table { line: 0, what: e.to_string() })
}
