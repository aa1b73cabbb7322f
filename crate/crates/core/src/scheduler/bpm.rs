use serde::Serialize;

use super::SchedulerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoteValue {
    Quarter,
    Eighth,
    Sixteenth,
}

impl NoteValue {
    pub const ALL: [NoteValue; 3] = [NoteValue::Quarter, NoteValue::Eighth, NoteValue::Sixteenth];

    pub fn subdivisions(self) -> u32 {
        match self {
            NoteValue::Quarter => 1,
            NoteValue::Eighth => 2,
            NoteValue::Sixteenth => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoteValue::Quarter => "quarter",
            NoteValue::Eighth => "eighth",
            NoteValue::Sixteenth => "sixteenth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BpmLimit {
    pub bpm: u32,
    /// One 4/4 measure of notes at the limit, in seconds.
    pub measure_s: f64,
}

impl BpmLimit {
    /// Below one beat per minute the tempo is not playable.
    pub fn is_feasible(&self) -> bool {
        self.bpm >= 1
    }
}

/// Tempo ceiling when every `note_value` note needs `limit_ms` of movement.
pub fn max_bpm(limit_ms: f64, note_value: NoteValue) -> Result<BpmLimit, SchedulerError> {
    if !(limit_ms > 0.0) || !limit_ms.is_finite() {
        return Err(SchedulerError::Domain(limit_ms));
    }
    let raw = 60_000.0 / (limit_ms * f64::from(note_value.subdivisions()));
    Ok(BpmLimit {
        bpm: (raw + 0.5).floor() as u32,
        measure_s: 4.0 * limit_ms / 1000.0,
    })
}

/// Limits for all three note values.
pub fn bpm_table(limit_ms: f64) -> Result<[(NoteValue, BpmLimit); 3], SchedulerError> {
    Ok([
        (NoteValue::Quarter, max_bpm(limit_ms, NoteValue::Quarter)?),
        (NoteValue::Eighth, max_bpm(limit_ms, NoteValue::Eighth)?),
        (NoteValue::Sixteenth, max_bpm(limit_ms, NoteValue::Sixteenth)?),
    ])
}
