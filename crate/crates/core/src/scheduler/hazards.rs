use serde::Serialize;

use super::ActuationTimeline;
use crate::fingering::{FingeringTable, KeyMask};

use super::EventKind;

/// An intermediate fingering that persists during a note transition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hazard {
    pub between: (usize, usize),
    pub transient_mask: KeyMask,
    /// Note the table maps the transient mask to, if any.
    pub sounding_as: Option<u8>,
    /// Audio-clock time the transient mask appears.
    pub start_ms: f64,
    pub window_ms: f64,
}

/// Sweeps key completion times of every transition and reports intermediate
/// masks that last longer than `threshold_ms`.
pub fn detect_transient_hazards(
    timeline: &ActuationTimeline,
    table: &FingeringTable,
    threshold_ms: f64,
) -> Vec<Hazard> {
    let mut out = Vec::new();
    let notes = timeline.score.events();
    for j in 1..notes.len() {
        let (from, to) = (timeline.masks[j - 1], timeline.masks[j]);
        let mut moves: Vec<_> = timeline
            .key_events()
            .filter(|e| e.note_index == j)
            .collect();
        moves.sort_by(|a, b| a.motion_end_ms.total_cmp(&b.motion_end_ms));
        let mut mask = from;
        let mut k = 0;
        while k < moves.len() {
            let t = moves[k].motion_end_ms;
            while k < moves.len() && moves[k].motion_end_ms == t {
                let key = moves[k].key().expect("key event");
                if moves[k].kind == EventKind::KeyPress {
                    mask.insert(key);
                } else {
                    mask.remove(key);
                }
                k += 1;
            }
            let Some(next) = moves.get(k) else { break };
            let window = next.motion_end_ms - t;
            if mask != from && mask != to && window > threshold_ms {
                out.push(Hazard {
                    between: (j - 1, j),
                    transient_mask: mask,
                    sounding_as: table.sounding_note(mask, notes[j].midi_note),
                    start_ms: t,
                    window_ms: window,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi_ingest::parse_text_score;
    use crate::scheduler::{build_timeline, ActuationProfile, SchedulerConfig};
    use crate::KeyId;

    fn run(text: &str, profile: &ActuationProfile, threshold: f64) -> Vec<Hazard> {
        let table = FingeringTable::default();
        let tl = build_timeline(
            &parse_text_score(text).unwrap(),
            &table,
            profile,
            &SchedulerConfig::default(),
        )
        .unwrap();
        detect_transient_hazards(&tl, &table, threshold)
    }

    #[test]
    fn same_note_is_clean() {
        assert!(run("A4 300\nA4 300", &ActuationProfile::default(), 0.0).is_empty());
    }

    #[test]
    fn uniform_profile_is_clean() {
        let mut p = ActuationProfile::default();
        for k in KeyId::ALL {
            let l = p.key_mut(k);
            l.key_ms = 50.0;
            l.motor_ms = 60.0;
        }
        assert!(run("C4 300\nE5 300\nF#4 300\nC7 300\nD4 300", &p, 0.0).is_empty());
    }

    #[test]
    fn unequal_presses_open_a_window() {
        // G4 -> E4 presses E (77.50) and F (68.75); F lands 8.75 ms early.
        let hz = run("G4 300\nE4 300", &ActuationProfile::default(), 0.0);
        assert_eq!(hz.len(), 1);
        assert_eq!(hz[0].between, (0, 1));
        assert!((hz[0].window_ms - 8.75).abs() < 1e-9);
        assert!(hz[0].transient_mask.contains(KeyId::F));
        assert!(!hz[0].transient_mask.contains(KeyId::E));
        assert_eq!(hz[0].sounding_as, None);
        assert!(run("G4 300\nE4 300", &ActuationProfile::default(), 10.0).is_empty());
    }

    #[test]
    fn transient_matching_a_table_entry_names_it() {
        let mut p = ActuationProfile::default();
        p.key_mut(KeyId::G).key_ms = 150.0;
        p.key_mut(KeyId::G).motor_ms = 160.0;
        // G#4 -> A4 releases G# lever and G; the slow G leaves the G4 fingering.
        let hz = run("G#4 600\nA4 600", &p, 10.0);
        assert_eq!(hz.len(), 1);
        assert_eq!(hz[0].sounding_as, Some(67));
        assert!((hz[0].window_ms - 90.0).abs() < 1e-9);
    }
}
