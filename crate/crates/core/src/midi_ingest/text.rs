//! Line-oriented text scores.
//!
//! ```text
//! # comment
//! C4 400
//! F#5 200.5
//! R 100        # rest
//! ```
//!
//! Durations are milliseconds with at most microsecond precision; onsets
//! accumulate from zero. Scientific pitch notation, C4 = MIDI 60.

use super::{IngestError, NoteEvent, Score};

const NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// Name with octave, sharps only (`F#4`).
pub fn note_name(midi_note: u8) -> String {
    let octave = i32::from(midi_note) / 12 - 1;
    format!("{}{}", NAMES[usize::from(midi_note % 12)], octave)
}

/// Parses `C4`, `F#5`, `Bb3`, `E♭4`; returns the unclamped MIDI number.
pub fn parse_note_name(s: &str) -> Option<i32> {
    let mut chars = s.chars();
    let pc = match chars.next()?.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let rest = chars.as_str();
    let (accidental, octave) = match rest.chars().next()? {
        '#' | '♯' => (1, &rest[rest.chars().next()?.len_utf8()..]),
        'b' | '♭' => (-1, &rest[rest.chars().next()?.len_utf8()..]),
        _ => (0, rest),
    };
    let octave: i32 = octave.parse().ok()?;
    Some(12 * (octave + 1) + pc + accidental)
}

fn parse_duration_us(token: &str) -> Option<i64> {
    let (int, frac) = token.split_once('.').unwrap_or((token, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 3 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_us: i64 = format!("{frac:0<3}").parse().ok()?;
    int.checked_mul(1000)?.checked_add(frac_us)
}

fn us_to_ms(us: i64) -> f64 {
    us as f64 / 1000.0
}

fn ms_to_us(ms: f64) -> i64 {
    (ms * 1000.0).round() as i64
}

fn format_us(us: i64) -> String {
    if us % 1000 == 0 {
        format!("{}", us / 1000)
    } else {
        let s = format!("{}.{:03}", us / 1000, us % 1000);
        s.trim_end_matches('0').to_string()
    }
}

pub fn parse_text_score(text: &str) -> Result<Score, IngestError> {
    let mut events = Vec::new();
    let mut cursor_us: i64 = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let (Some(name), Some(dur), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(IngestError::Syntax {
                line,
                message: format!("expected `<note> <duration_ms>`, got `{content}`"),
            });
        };
        let duration_us = parse_duration_us(dur).ok_or_else(|| IngestError::Syntax {
            line,
            message: format!("invalid duration `{dur}`"),
        })?;
        if name.eq_ignore_ascii_case("r") || name.eq_ignore_ascii_case("rest") {
            cursor_us += duration_us;
            continue;
        }
        let note = parse_note_name(name).ok_or_else(|| IngestError::Syntax {
            line,
            message: format!("invalid note name `{name}`"),
        })?;
        let index = events.len();
        let midi_note = u8::try_from(note)
            .ok()
            .filter(|n| (crate::LOWEST_NOTE..=crate::HIGHEST_NOTE).contains(n))
            .ok_or(IngestError::Range { index, note })?;
        events.push(NoteEvent::new(
            midi_note,
            us_to_ms(cursor_us),
            us_to_ms(duration_us),
        ));
        cursor_us += duration_us;
    }
    Score::from_events(events)
}

// `#` also spells sharps, so a comment starts only at a `#` that opens a token.
fn strip_comment(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &raw[..i];
        }
    }
    raw
}

/// Serializes a score to the text format, inserting rests for gaps.
///
/// Times are written at microsecond resolution.
pub fn to_text_score(score: &Score) -> String {
    let mut out = String::new();
    let mut cursor_us = 0i64;
    for ev in score.events() {
        let onset_us = ms_to_us(ev.onset_ms);
        if onset_us > cursor_us {
            out.push_str(&format!("R {}\n", format_us(onset_us - cursor_us)));
        }
        let dur_us = ms_to_us(ev.duration_ms);
        out.push_str(&format!("{} {}\n", note_name(ev.midi_note), format_us(dur_us)));
        cursor_us = onset_us + dur_us;
    }
    out
}
