//! Score ingestion: Standard MIDI Files and the line-oriented text score.
//!
//! Both front ends produce a [`Score`], a validated monophonic list of
//! [`NoteEvent`]s with onsets in milliseconds from the start of the piece.

mod smf;
mod text;

use serde::{Deserialize, Serialize};

pub use smf::{encode_smf, parse_midi};
pub use text::{note_name, parse_note_name, parse_text_score, to_text_score};

use crate::{HIGHEST_NOTE, LOWEST_NOTE};

/// Tempo assumed until the first tempo meta-event (120 BPM).
pub const DEFAULT_TEMPO_US: u32 = 500_000;
/// Resolution recorded for scores that did not come from a MIDI file.
pub const DEFAULT_TICKS_PER_QUARTER: u16 = 480;

/// Shortest accepted note.
pub const MIN_DURATION_MS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("malformed MIDI file: {0}")]
    MalformedFile(String),
    #[error("unsupported MIDI file: {0}")]
    UnsupportedFormat(String),
    #[error("note {index}: note {note} starts while note {held} is still sounding (input must be monophonic)")]
    Polyphony { index: usize, held: u8, note: u8 },
    #[error("note {index}: MIDI note {note} is outside the playable range {LOWEST_NOTE}..={HIGHEST_NOTE}")]
    Range { index: usize, note: i32 },
    #[error("note {index}: duration {duration_ms} ms is shorter than {MIN_DURATION_MS} ms")]
    TooShort { index: usize, duration_ms: f64 },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// One scheduled note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub midi_note: u8,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn new(midi_note: u8, onset_ms: f64, duration_ms: f64) -> Self {
        Self {
            midi_note,
            onset_ms,
            duration_ms,
            velocity: 100,
        }
    }

    pub fn end_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }

    /// The same note moved later by `offset_ms`.
    pub fn shifted(&self, offset_ms: f64) -> Self {
        Self {
            onset_ms: self.onset_ms + offset_ms,
            ..*self
        }
    }
}

/// A validated, time-ordered, non-overlapping note list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    events: Vec<NoteEvent>,
    pub ticks_per_quarter: u16,
    pub tempo_map: Vec<(u64, u32)>,
}

impl Score {
    /// Validates range, duration and the monophonic ordering contract.
    pub fn new(
        events: Vec<NoteEvent>,
        ticks_per_quarter: u16,
        tempo_map: Vec<(u64, u32)>,
    ) -> Result<Self, IngestError> {
        let mut prev_end = f64::NEG_INFINITY;
        let mut prev_note = 0;
        for (index, ev) in events.iter().enumerate() {
            if !(LOWEST_NOTE..=HIGHEST_NOTE).contains(&ev.midi_note) {
                return Err(IngestError::Range {
                    index,
                    note: ev.midi_note.into(),
                });
            }
            if !(ev.duration_ms >= MIN_DURATION_MS) || !ev.duration_ms.is_finite() {
                return Err(IngestError::TooShort {
                    index,
                    duration_ms: ev.duration_ms,
                });
            }
            if !(ev.onset_ms >= 0.0) || ev.onset_ms < prev_end - 1e-9 {
                return Err(IngestError::Polyphony {
                    index,
                    held: prev_note,
                    note: ev.midi_note,
                });
            }
            prev_end = ev.end_ms();
            prev_note = ev.midi_note;
        }
        Ok(Self {
            events,
            ticks_per_quarter,
            tempo_map,
        })
    }

    /// Score with default MIDI metadata, for events not read from a file.
    pub fn from_events(events: Vec<NoteEvent>) -> Result<Self, IngestError> {
        Self::new(
            events,
            DEFAULT_TICKS_PER_QUARTER,
            vec![(0, DEFAULT_TEMPO_US)],
        )
    }

    pub fn events(&self) -> &[NoteEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_ms(&self) -> f64 {
        self.events.last().map_or(0.0, NoteEvent::end_ms)
    }

    pub fn notes(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.midi_note).collect()
    }

    /// All events moved later by `offset_ms` (score time to audio time).
    pub fn shifted(&self, offset_ms: f64) -> Self {
        Self {
            events: self.events.iter().map(|e| e.shifted(offset_ms)).collect(),
            ..self.clone()
        }
    }

    /// Legato scale from `first` to `last` inclusive with constant note length.
    pub fn chromatic(first: u8, last: u8, note_ms: f64) -> Result<Self, IngestError> {
        let events = (first..=last)
            .enumerate()
            .map(|(i, n)| NoteEvent::new(n, i as f64 * note_ms, note_ms))
            .collect();
        Self::from_events(events)
    }
}

/// Reads a score from a path, dispatching on the extension (`.mid`/`.midi` or text).
pub fn load_score(path: &std::path::Path) -> anyhow::Result<Score> {
    use anyhow::Context;
    let is_midi = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"));
    if is_midi {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(parse_midi(&bytes).with_context(|| format!("parsing {}", path.display()))?)
    } else {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(parse_text_score(&text).with_context(|| format!("parsing {}", path.display()))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlap_and_short_notes() {
        let overlap = vec![NoteEvent::new(60, 0.0, 500.0), NoteEvent::new(62, 400.0, 100.0)];
        assert!(matches!(
            Score::from_events(overlap),
            Err(IngestError::Polyphony { index: 1, held: 60, note: 62 })
        ));
        let short = vec![NoteEvent::new(60, 0.0, 0.5)];
        assert!(matches!(
            Score::from_events(short),
            Err(IngestError::TooShort { index: 0, .. })
        ));
        let touching = vec![NoteEvent::new(60, 0.0, 500.0), NoteEvent::new(62, 500.0, 100.0)];
        assert!(Score::from_events(touching).is_ok());
    }

    #[test]
    fn chromatic_scale_spans_playable_range() {
        let s = Score::chromatic(60, 96, 500.0).unwrap();
        assert_eq!(s.len(), 37);
        assert_eq!(s.notes(), (60..=96).collect::<Vec<_>>());
        assert_eq!(s.end_ms(), 37.0 * 500.0);
        assert_eq!(s.shifted(100.0).events()[1].onset_ms, 600.0);
    }
}
