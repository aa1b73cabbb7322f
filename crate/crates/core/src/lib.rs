//! Software twin of a semi-automatic flute.
//!
//! A score (Standard MIDI File or a line-oriented text score) is turned into a
//! timed plan of key and head-joint actuations using measured servo latencies,
//! rendered through an additive flute model, and checked with an acoustic
//! evaluation pipeline (pitch verdicts, spectrograms, 2nd/3rd harmonic balance).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod fingering;
mod kv;
pub mod midi_ingest;
pub mod scheduler;
pub mod synth;
pub mod wav;

pub use fingering::{FingeringTable, KeyId, KeyMask, Register};
pub use midi_ingest::{NoteEvent, Score};
pub use scheduler::{ActuationProfile, ActuationTimeline, SchedulerConfig};
pub use synth::{AudioBuffer, SynthConfig};

/// Lowest playable note (C4).
pub const LOWEST_NOTE: u8 = 60;
/// Highest playable note (C7).
pub const HIGHEST_NOTE: u8 = 96;
