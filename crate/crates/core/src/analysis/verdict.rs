use serde::Serialize;

use super::{cents, AnalysisError, F0Frame, F0Track};
use crate::midi_ingest::Score;
use crate::synth::note_to_freq;

/// Leading part of a note checked for an unstable onset.
const ONSET_MS: f64 = 100.0;
/// Unvoiced stretch at the end of a note read as a breath.
const BREATH_MS: f64 = 150.0;
const UNINTENDED_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PitchFlag {
    /// No voiced frame inside the note.
    EmptyNote,
    UnintendedPitch,
    UnstableOnset,
    Breath,
}

impl PitchFlag {
    pub fn name(self) -> &'static str {
        match self {
            PitchFlag::EmptyNote => "EmptyNote",
            PitchFlag::UnintendedPitch => "UnintendedPitch",
            PitchFlag::UnstableOnset => "UnstableOnset",
            PitchFlag::Breath => "Breath",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PitchVerdict {
    pub note_index: usize,
    pub midi_note: u8,
    pub target_hz: f64,
    pub median_f0_hz: Option<f64>,
    pub deviation_cents: Option<f64>,
    /// Nearest equal-tempered note to the median f0.
    pub detected_midi: Option<i32>,
    pub pass: bool,
    pub flags: Vec<PitchFlag>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

fn nearest_midi(f: f64, a4_hz: f64) -> i32 {
    (69.0 + 12.0 * (f / a4_hz).log2()).round() as i32
}

/// Per-note pitch verdicts.
///
/// A note is judged on frames whose whole analysis window lies inside the
/// note; notes shorter than one frame fall back to frames centred inside.
pub fn verify_pitch(
    track: &F0Track,
    score: &Score,
    tol_cents: f64,
    a4_hz: f64,
) -> Result<Vec<PitchVerdict>, AnalysisError> {
    let half = track.frame_ms / 2.0;
    let mut out = Vec::with_capacity(score.len());
    for (i, note) in score.events().iter().enumerate() {
        let (on, end) = (note.onset_ms, note.end_ms());
        let mut frames: Vec<&F0Frame> = track
            .frames
            .iter()
            .filter(|f| f.time_ms - half >= on && f.time_ms + half <= end)
            .collect();
        if frames.is_empty() {
            frames = track
                .frames
                .iter()
                .filter(|f| f.time_ms >= on && f.time_ms < end)
                .collect();
        }
        let target_hz = note_to_freq(i32::from(note.midi_note), a4_hz)
            .map_err(|e| AnalysisError::Domain(e.to_string()))?;
        let dev = |hz: f64| cents(hz, target_hz).expect("positive frequencies");
        let within = |f: &&F0Frame| f.f0_hz.is_some_and(|hz| dev(hz).abs() <= tol_cents);

        let mut voiced: Vec<f64> = frames.iter().filter_map(|f| f.f0_hz).collect();
        let median_f0_hz = median(&mut voiced);
        let deviation_cents = median_f0_hz.map(dev);
        let pass = deviation_cents.is_some_and(|d| d.abs() <= tol_cents);

        let mut flags = Vec::new();
        if median_f0_hz.is_none() {
            flags.push(PitchFlag::EmptyNote);
        }
        let mut run = 0;
        for f in &frames {
            let other = f.f0_hz.is_some_and(|hz| {
                let n = nearest_midi(hz, a4_hz);
                n != i32::from(note.midi_note)
                    && dev(hz).abs() > tol_cents
                    && note_to_freq(n, a4_hz)
                        .is_ok_and(|nf| cents(hz, nf).is_ok_and(|c| c.abs() <= tol_cents))
            });
            run = if other { run + 1 } else { 0 };
            if run >= UNINTENDED_RUN {
                flags.push(PitchFlag::UnintendedPitch);
                break;
            }
        }
        let (head, rest): (Vec<&F0Frame>, Vec<&F0Frame>) =
            frames.iter().partition(|f| f.time_ms < on + ONSET_MS);
        if !head.is_empty() && !rest.is_empty() {
            let unsettled = head.iter().any(|f| !within(f));
            let mut rest_f0: Vec<f64> = rest.iter().filter_map(|f| f.f0_hz).collect();
            let rest_ok = median(&mut rest_f0).is_some_and(|m| dev(m).abs() <= tol_cents);
            if unsettled && rest_ok {
                flags.push(PitchFlag::UnstableOnset);
            }
        }
        if median_f0_hz.is_some() {
            let mut silent_since = None;
            for f in &frames {
                match (f.f0_hz, silent_since) {
                    (None, None) => silent_since = Some(f.time_ms),
                    (Some(_), _) => silent_since = None,
                    _ => {}
                }
            }
            if silent_since.is_some_and(|t| end - (t - track.hop_ms / 2.0) >= BREATH_MS) {
                flags.push(PitchFlag::Breath);
            }
        }

        out.push(PitchVerdict {
            note_index: i,
            midi_note: note.midi_note,
            target_hz,
            median_f0_hz,
            deviation_cents,
            detected_midi: median_f0_hz.map(|hz| nearest_midi(hz, a4_hz)),
            pass,
            flags,
        });
    }
    Ok(out)
}
