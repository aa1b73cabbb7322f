use std::fmt::Write as _;

use serde::Serialize;

use super::{ActuationProfile, Latency, SchedulerConfig, SchedulerError};
use crate::fingering::{transition_diff, FingeringTable, KeyId, KeyMask};
use crate::midi_ingest::Score;

const EPS_MS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    KeyPress,
    KeyRelease,
    HeadRotateTo,
    HeadReturn,
}

impl EventKind {
    pub fn is_key(self) -> bool {
        matches!(self, EventKind::KeyPress | EventKind::KeyRelease)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Target {
    Key(KeyId),
    AngleDeg(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActuationEvent {
    pub kind: EventKind,
    pub target: Target,
    /// Index of the note this movement prepares.
    pub note_index: usize,
    pub motor_start_ms: f64,
    pub motion_start_ms: f64,
    pub motion_end_ms: f64,
}

impl ActuationEvent {
    pub fn key(&self) -> Option<KeyId> {
        match self.target {
            Target::Key(k) => Some(k),
            Target::AngleDeg(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActuationTimeline {
    pub events: Vec<ActuationEvent>,
    /// The source score, on score time.
    pub score: Score,
    /// Fingering used for each note.
    pub masks: Vec<KeyMask>,
    pub lead_in_ms: f64,
    pub head_angle_deg: f64,
}

impl ActuationTimeline {
    /// Onset of note `i` on the audio clock.
    pub fn onset_ms(&self, i: usize) -> f64 {
        self.score.events()[i].onset_ms + self.lead_in_ms
    }

    /// Score shifted onto the audio clock.
    pub fn audio_score(&self) -> Score {
        self.score.shifted(self.lead_in_ms)
    }

    pub fn key_events(&self) -> impl Iterator<Item = &ActuationEvent> {
        self.events.iter().filter(|e| e.kind.is_key())
    }

    pub fn head_events(&self) -> impl Iterator<Item = &ActuationEvent> {
        self.events.iter().filter(|e| !e.kind.is_key())
    }

    /// Fingering after every completed key movement, as
    /// `(time, mask, note being prepared)`, starting from all keys open.
    pub fn fingering_changes(&self) -> Vec<(f64, KeyMask, usize)> {
        let mut ends: Vec<&ActuationEvent> = self.key_events().collect();
        ends.sort_by(|a, b| a.motion_end_ms.total_cmp(&b.motion_end_ms));
        let mut mask = KeyMask::EMPTY;
        let mut out: Vec<(f64, KeyMask, usize)> = vec![(0.0, mask, 0)];
        for ev in ends {
            let key = ev.key().expect("key event");
            match ev.kind {
                EventKind::KeyPress => mask.insert(key),
                _ => mask.remove(key),
            }
            match out.last_mut() {
                Some(last) if (last.0 - ev.motion_end_ms).abs() < EPS_MS => {
                    last.1 = mask;
                    last.2 = ev.note_index;
                }
                _ => out.push((ev.motion_end_ms, mask, ev.note_index)),
            }
        }
        out
    }

    /// Checks the ordering and readiness invariants.
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |m: String| Err(SchedulerError::InvalidTimeline(m));
        for ev in &self.events {
            if !(ev.motor_start_ms <= ev.motion_start_ms + EPS_MS
                && ev.motion_start_ms < ev.motion_end_ms)
            {
                return bad(format!("event {ev:?} is not ordered motor ≤ start < end"));
            }
            if ev.note_index >= self.score.len() {
                return bad(format!("event refers to missing note {}", ev.note_index));
            }
            if ev.kind == EventKind::KeyPress && ev.motion_end_ms > self.onset_ms(ev.note_index) + EPS_MS {
                return bad(format!("key press for note {} completes late", ev.note_index));
            }
        }
        let mut head: Vec<_> = self.head_events().collect();
        head.sort_by(|a, b| a.motion_start_ms.total_cmp(&b.motion_start_ms));
        for w in head.windows(2) {
            if w[1].motion_start_ms < w[0].motion_end_ms - EPS_MS {
                return bad("head-joint movements overlap".into());
            }
        }
        if self.masks.len() != self.score.len() {
            return bad("one fingering per note required".into());
        }
        Ok(())
    }

    /// Line-delimited JSON, one record per event, times with two decimals.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            let kind = serde_json::to_string(&ev.kind).expect("enum serializes");
            let target = match ev.target {
                Target::Key(k) => format!("\"{k}\""),
                Target::AngleDeg(a) => format!("{a:.2}"),
            };
            writeln!(
                out,
                "{{\"kind\":{kind},\"target\":{target},\"note_index\":{},\"motor_start_ms\":{:.2},\"motion_start_ms\":{:.2},\"motion_end_ms\":{:.2}}}",
                ev.note_index, ev.motor_start_ms, ev.motion_start_ms, ev.motion_end_ms
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Plans every key and head-joint movement for `score`.
///
/// When several transitions are too fast, the error reports the one needing
/// the longest key travel.
pub fn build_timeline(
    score: &Score,
    table: &FingeringTable,
    profile: &ActuationProfile,
    cfg: &SchedulerConfig,
) -> Result<ActuationTimeline, SchedulerError> {
    let masks = score
        .events()
        .iter()
        .map(|e| table.lookup(e.midi_note))
        .collect::<Result<Vec<_>, _>>()?;

    let mut events = Vec::new();
    // The most demanding violation names the key that limits the whole score.
    let mut worst: Option<SchedulerError> = None;
    let mut prev = KeyMask::EMPTY;
    for (j, note) in score.events().iter().enumerate() {
        let onset = note.onset_ms + cfg.lead_in_ms;
        let (press, release) = transition_diff(prev, masks[j]);
        let moves: Vec<(EventKind, KeyId, Latency)> = press
            .iter()
            .map(|k| (EventKind::KeyPress, k, profile.key(k).press()))
            .chain(
                release
                    .iter()
                    .map(|k| (EventKind::KeyRelease, k, profile.key(k).release())),
            )
            .collect();
        prev = masks[j];
        let Some(&(_, slowest_key, slowest)) = moves
            .iter()
            .reduce(|a, b| if b.2.key_ms > a.2.key_ms { b } else { a })
        else {
            continue;
        };
        if j > 0 {
            let available = note.onset_ms - score.events()[j - 1].onset_ms;
            if slowest.key_ms > available + EPS_MS {
                let more_demanding = match &worst {
                    Some(SchedulerError::InfeasibleTiming { required_ms, .. }) => {
                        slowest.key_ms > *required_ms
                    }
                    _ => true,
                };
                if more_demanding {
                    worst = Some(SchedulerError::InfeasibleTiming {
                        note_index: j,
                        key: Some(slowest_key),
                        required_ms: slowest.key_ms,
                        available_ms: available,
                    });
                }
                continue;
            }
        }
        let travel_start = onset - slowest.key_ms;
        for (kind, key, lat) in moves {
            let motor_start = travel_start - lat.pre_travel_ms(cfg.split_factor);
            if motor_start < -EPS_MS {
                return Err(SchedulerError::InfeasibleTiming {
                    note_index: j,
                    key: Some(key),
                    required_ms: onset - motor_start,
                    available_ms: onset,
                });
            }
            events.push(ActuationEvent {
                kind,
                target: Target::Key(key),
                note_index: j,
                motor_start_ms: motor_start,
                motion_start_ms: travel_start,
                motion_end_ms: travel_start + lat.key_ms,
            });
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }
    if cfg.assist {
        events.extend(schedule_head_joint(
            score,
            profile,
            cfg.registers.low_max,
            cfg.lead_in_ms,
        )?);
    }
    events.sort_by(|a, b| {
        a.motor_start_ms
            .total_cmp(&b.motor_start_ms)
            .then(a.motion_end_ms.total_cmp(&b.motion_end_ms))
    });
    let timeline = ActuationTimeline {
        events,
        score: score.clone(),
        masks,
        lead_in_ms: cfg.lead_in_ms,
        head_angle_deg: profile.head_angle_deg,
    };
    timeline.validate()?;
    Ok(timeline)
}

/// Head-joint rotations at the borders of low-register runs.
///
/// A rotation is timed to finish at the onset of the first low note of a run;
/// the return finishes at the onset of the first note after the run. The
/// joint only moves after the preceding note's onset, never into a note.
pub fn schedule_head_joint(
    score: &Score,
    profile: &ActuationProfile,
    low_max: u8,
    lead_in_ms: f64,
) -> Result<Vec<ActuationEvent>, SchedulerError> {
    let mut out = Vec::new();
    let mut rotated = false;
    for (j, note) in score.events().iter().enumerate() {
        let low = note.midi_note <= low_max;
        if low == rotated {
            continue;
        }
        rotated = low;
        let onset = note.onset_ms + lead_in_ms;
        let motion_start = onset - profile.head_joint_ms;
        let motor_start = motion_start - profile.head_motor_lead_ms();
        if j > 0 {
            let available = note.onset_ms - score.events()[j - 1].onset_ms;
            if profile.head_joint_ms > available + EPS_MS {
                return Err(SchedulerError::InfeasibleTiming {
                    note_index: j,
                    key: None,
                    required_ms: profile.head_joint_ms,
                    available_ms: available,
                });
            }
        } else if motor_start < -EPS_MS {
            return Err(SchedulerError::InfeasibleTiming {
                note_index: j,
                key: None,
                required_ms: profile.head_motor_ms,
                available_ms: onset,
            });
        }
        let (kind, angle) = if low {
            (EventKind::HeadRotateTo, profile.head_angle_deg)
        } else {
            (EventKind::HeadReturn, 0.0)
        };
        out.push(ActuationEvent {
            kind,
            target: Target::AngleDeg(angle),
            note_index: j,
            motor_start_ms: motor_start,
            motion_start_ms: motion_start,
            motion_end_ms: onset,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingering::Register;
    use crate::midi_ingest::{parse_text_score, NoteEvent};

    fn setup() -> (FingeringTable, ActuationProfile, SchedulerConfig) {
        (
            FingeringTable::default(),
            ActuationProfile::default(),
            SchedulerConfig::default(),
        )
    }

    #[test]
    fn single_low_note() {
        let (t, p, cfg) = setup();
        let s = parse_text_score("C4 1000").unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        let presses = tl.events.iter().filter(|e| e.kind == EventKind::KeyPress).count();
        assert_eq!(presses, t.lookup(60).unwrap().len());
        assert_eq!(tl.head_events().count(), 1);
        assert_eq!(tl.head_events().next().unwrap().kind, EventKind::HeadRotateTo);
        for e in &tl.events {
            assert!(e.motor_start_ms >= 0.0);
            assert!(e.motion_end_ms <= cfg.lead_in_ms + 1e-9);
        }
        assert!(tl.events.iter().all(|e| e.kind != EventKind::KeyRelease));
    }

    #[test]
    fn e_key_press_timing() {
        let (t, p, cfg) = setup();
        // D#4 -> E4 presses nothing and releases D; E4 from all-open presses E among others
        let s = parse_text_score("E4 500").unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        let e = tl.key_events().find(|e| e.key() == Some(KeyId::E)).unwrap();
        let onset = cfg.lead_in_ms;
        assert!((e.motion_end_ms - onset).abs() < 1e-9);
        assert!((e.motion_start_ms - (onset - 77.50)).abs() < 1e-9);
        assert!((e.motor_start_ms - (onset - 77.50 - (96.67 - 77.50))).abs() < 1e-9);
    }

    #[test]
    fn fifty_ms_chromatic_is_infeasible_on_e() {
        let (t, p, cfg) = setup();
        let s = Score::chromatic(60, 96, 50.0).unwrap();
        let err = build_timeline(&s, &t, &p, &cfg).unwrap_err();
        match err {
            SchedulerError::InfeasibleTiming { key, required_ms, available_ms, .. } => {
                assert_eq!(key, Some(KeyId::E));
                assert_eq!(required_ms, 77.50);
                assert_eq!(available_ms, 50.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_message_names_key(&build_timeline(&s, &t, &p, &cfg).unwrap_err()));
    }

    fn err_message_names_key(e: &SchedulerError) -> bool {
        e.to_string().contains("E key")
    }

    #[test]
    fn all_low_score_rotates_once() {
        let (_, p, cfg) = setup();
        let s = parse_text_score("C4 300\nD4 300\nE4 300\nC#5 300").unwrap();
        let ev = schedule_head_joint(&s, &p, cfg.registers.low_max, cfg.lead_in_ms).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::HeadRotateTo);
        assert_eq!(ev[0].target, Target::AngleDeg(22.0));
    }

    #[test]
    fn head_rotation_timing() {
        let (_, p, _) = setup();
        let s = parse_text_score("D5 500\nA4 500").unwrap();
        let ev = schedule_head_joint(&s, &p, 73, 0.0).unwrap();
        assert_eq!(ev.len(), 1);
        let r = ev[0];
        assert_eq!(r.note_index, 1);
        assert!((r.motion_end_ms - 500.0).abs() < 1e-9);
        assert!((r.motion_end_ms - r.motion_start_ms - 40.0).abs() < 1e-9);
        assert!((r.motion_start_ms - r.motor_start_ms - 33.33).abs() < 1e-9);
    }

    #[test]
    fn head_rotation_needs_room() {
        let (_, p, _) = setup();
        let s = parse_text_score("D5 30\nA4 500").unwrap();
        assert!(matches!(
            schedule_head_joint(&s, &p, 73, 500.0),
            Err(SchedulerError::InfeasibleTiming { key: None, note_index: 1, .. })
        ));
        let s = parse_text_score("A4 500").unwrap();
        assert!(matches!(
            schedule_head_joint(&s, &p, 73, 10.0),
            Err(SchedulerError::InfeasibleTiming { key: None, note_index: 0, .. })
        ));
    }

    #[test]
    fn assist_off_has_no_head_events() {
        let (t, p, mut cfg) = setup();
        cfg.assist = false;
        let s = parse_text_score("C4 300\nD5 300\nC4 300").unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        assert_eq!(tl.head_events().count(), 0);
    }

    #[test]
    fn insufficient_lead_in() {
        let (t, p, mut cfg) = setup();
        cfg.lead_in_ms = 50.0;
        let s = parse_text_score("C4 300").unwrap();
        assert!(matches!(
            build_timeline(&s, &t, &p, &cfg),
            Err(SchedulerError::InfeasibleTiming { note_index: 0, .. })
        ));
    }

    #[test]
    fn repeated_note_moves_nothing() {
        let (t, p, mut cfg) = setup();
        cfg.assist = false;
        let s = parse_text_score("A4 300\nA4 300").unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        assert!(tl.key_events().all(|e| e.note_index == 0));
    }

    #[test]
    fn jsonl_has_two_decimals() {
        let (t, p, cfg) = setup();
        let s = Score::from_events(vec![NoteEvent::new(64, 0.0, 500.0)]).unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        let text = tl.to_jsonl();
        assert_eq!(text.lines().count(), tl.events.len());
        let e_line = text.lines().find(|l| l.contains("\"target\":\"E\"")).unwrap();
        assert!(e_line.contains("\"motion_start_ms\":422.50"), "{e_line}");
        assert!(e_line.contains("\"motor_start_ms\":403.33"), "{e_line}");
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["kind"].is_string());
            assert!(v["motion_end_ms"].is_number());
        }
        let head = text.lines().find(|l| l.contains("HeadRotateTo")).unwrap();
        assert!(head.contains("\"target\":22.00"));
        assert!(Register::Low < Register::Middle);
    }

    #[test]
    fn fingering_changes_end_on_each_note_mask() {
        let (t, p, cfg) = setup();
        let s = Score::chromatic(60, 72, 300.0).unwrap();
        let tl = build_timeline(&s, &t, &p, &cfg).unwrap();
        let changes = tl.fingering_changes();
        for i in 0..s.len() {
            let onset = tl.onset_ms(i);
            let state = changes.iter().rev().find(|c| c.0 <= onset + 1e-9).unwrap();
            assert_eq!(state.1, tl.masks[i], "note {i}");
        }
    }
}
