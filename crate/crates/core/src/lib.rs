//! Desk-scale automatic piano transcription toolkit.
//!
//! Sixteen-kilohertz waveforms go in, note events come out. The crate covers
//! the whole offline path: MIDI label preparation ([`midi`], [`roll`]), a
//! log-mel spectrogram frontend with a time-derivative plane ([`frontend`]),
//! waveform/label augmentation ([`augment`]), forward inference for a
//! convolutional onset-and-velocity network ([`network`]), the training-loss
//! arithmetic with analytic gradients ([`losses`]), a peak-picking decoder
//! ([`decoder`]), note-matching metrics ([`eval`]), and corpus manifest
//! bookkeeping ([`dataset`]).
//!
//! Everything is deterministic: seeded randomness, ordered parallelism, and
//! byte-stable file formats. [`selftest`] runs the built-in verification
//! suites against independent oracles.

pub mod augment;
mod binio;
pub mod dataset;
pub mod decoder;
pub mod eval;
pub mod frontend;
pub mod losses;
pub mod matrix;
pub mod midi;
pub mod network;
pub mod pipeline;
pub mod roll;
pub mod selftest;

pub use matrix::Matrix;
pub use midi::{NoteEvent, NoteSequence, PedalEvent};
pub use roll::{PianoRoll, RollConfig, RollKind};
