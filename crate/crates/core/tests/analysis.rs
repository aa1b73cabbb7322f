use std::f64::consts::TAU;

use flute_twin::analysis::{
    analyze, cents, compare_delta_spl, estimate_f0, registers, spectrogram, AnalysisConfig,
    AnalysisError, PitchFlag,
};
use flute_twin::fingering::RegisterBounds;
use flute_twin::midi_ingest::parse_text_score;
use flute_twin::scheduler::{build_timeline, ActuationProfile, SchedulerConfig};
use flute_twin::synth::render;
use flute_twin::{AudioBuffer, FingeringTable, KeyId, Score, SynthConfig};
use proptest::prelude::*;

const FS: u32 = 44_100;

fn sine(f: f64, ms: f64, amp: f64) -> AudioBuffer {
    let n = (ms * f64::from(FS) / 1000.0) as usize;
    AudioBuffer::new(
        FS,
        (0..n).map(|i| amp * (TAU * f * i as f64 / f64::from(FS)).sin()).collect(),
    )
}

fn render_with(score: &Score, profile: &ActuationProfile, synth: &SynthConfig, assist: bool) -> (AudioBuffer, Score) {
    let cfg = SchedulerConfig {
        assist,
        ..SchedulerConfig::default()
    };
    let table = FingeringTable::default();
    let tl = build_timeline(score, &table, profile, &cfg).unwrap();
    (render(&tl, &table, synth).unwrap(), tl.audio_score())
}

#[test]
fn cents_domain() {
    assert_eq!(cents(440.0, 440.0).unwrap(), 0.0);
    assert!((cents(220.0, 440.0).unwrap() + 1200.0).abs() < 1e-12);
    assert!(matches!(cents(0.0, 440.0), Err(AnalysisError::Domain(_))));
    assert!(matches!(cents(440.0, -1.0), Err(AnalysisError::Domain(_))));
    assert!(matches!(cents(f64::NAN, 440.0), Err(AnalysisError::Domain(_))));
}

#[test]
fn results_do_not_depend_on_level() {
    let score = Score::chromatic(60, 96, 500.0).unwrap();
    let (audio, on_clock) = render_with(&score, &ActuationProfile::default(), &SynthConfig::default(), true);
    let cfg = AnalysisConfig::default();
    let reference = analyze(&audio, &on_clock, 440.0, &cfg).unwrap();
    assert_eq!(reference.passed(), 37);
    for gain in [0.5, 0.05] {
        let r = analyze(&audio.scaled(gain), &on_clock, 440.0, &cfg).unwrap();
        assert_eq!(r.passed(), reference.passed(), "gain {gain}");
        for (a, b) in r.harmonic_list().iter().zip(reference.harmonic_list()) {
            assert!((a.delta_spl_db - b.delta_spl_db).abs() < 1e-6, "gain {gain}, note {}", a.note_index);
        }
    }
}

#[test]
fn sixty_cents_sharp_fails_every_note() {
    let score = Score::chromatic(60, 96, 500.0).unwrap();
    let sharp = SynthConfig {
        a4_hz: 440.0 * 2f64.powf(60.0 / 1200.0),
        ..SynthConfig::default()
    };
    let (audio, on_clock) = render_with(&score, &ActuationProfile::default(), &sharp, true);
    let r = analyze(&audio, &on_clock, 440.0, &AnalysisConfig::default()).unwrap();
    assert_eq!(r.passed(), 0);
    for v in &r.verdicts {
        let d = v.deviation_cents.unwrap();
        assert!((d - 60.0).abs() < 5.0, "note {}: {d:.2}", v.note_index);
    }
}

#[test]
fn slow_key_leaves_an_audible_wrong_note() {
    // G#4 → A4 releases the G♯ lever and G; a 300 ms G key lets the lever
    // finish first, so G4 sounds near the end of the first note.
    let mut profile = ActuationProfile::default();
    let g = profile.key_mut(KeyId::G);
    g.key_ms = 300.0;
    g.motor_ms = 320.0;
    g.release = None;
    let score = parse_text_score("G#4 600\nA4 600").unwrap();
    let (audio, on_clock) = render_with(&score, &profile, &SynthConfig::default(), false);
    let r = analyze(&audio, &on_clock, 440.0, &AnalysisConfig::default()).unwrap();
    assert!(r.verdicts[0].flags.contains(&PitchFlag::UnintendedPitch), "{:?}", r.verdicts[0]);
    assert!(!r.verdicts[1].flags.contains(&PitchFlag::UnintendedPitch));
}

#[test]
fn silence_is_an_empty_note() {
    let score = parse_text_score("A4 500\nB4 500").unwrap().shifted(100.0);
    let audio = AudioBuffer::new(FS, vec![0.0; FS as usize * 2]);
    let r = analyze(&audio, &score, 440.0, &AnalysisConfig::default()).unwrap();
    for v in &r.verdicts {
        assert!(!v.pass);
        assert_eq!(v.flags, vec![PitchFlag::EmptyNote]);
        assert_eq!(v.median_f0_hz, None);
    }
}

#[test]
fn quiet_frames_are_unvoiced() {
    let track = estimate_f0(&sine(440.0, 300.0, 1e-5), 40.0, 10.0, 200.0, 2500.0).unwrap();
    assert_eq!(track.voiced().count(), 0);
    let track = estimate_f0(&sine(440.0, 300.0, 0.5), 40.0, 10.0, 200.0, 2500.0).unwrap();
    assert_eq!(track.voiced().count(), track.frames.len());
    // frames are stamped at their centres
    assert!((track.frames[0].time_ms - 20.0).abs() < 0.05);
    assert!((track.frames[1].time_ms - 30.0).abs() < 0.05);
}

#[test]
fn sine_gives_a_horizontal_ridge() {
    let s = spectrogram(&sine(1000.0, 200.0, 0.5), 12.0, 3.0).unwrap();
    let bin_hz = s.freqs_hz[1] - s.freqs_hz[0];
    for frame in 0..s.times_ms.len() {
        let f = s.freqs_hz[s.peak_bin(frame)];
        assert!((f - 1000.0).abs() <= bin_hz, "frame {frame}: {f}");
    }
}

#[test]
fn impulse_gives_a_vertical_line() {
    let mut x = vec![0.0; 4410];
    x[2205] = 1.0;
    let s = spectrogram(&AudioBuffer::new(FS, x), 12.0, 3.0).unwrap();
    let hit: Vec<usize> = (0..s.times_ms.len()).filter(|&k| s.frame_energy[k] > 0.0).collect();
    assert!(!hit.is_empty());
    for &k in &hit {
        assert!(s.flatness(k, 12.0) > 0.9, "frame {k}");
        // any frame whose window covers the impulse, and only those
        assert!((s.times_ms[k] - 50.0).abs() <= 6.0 + 1e-9);
    }
    let tone = spectrogram(&sine(1000.0, 100.0, 0.5), 12.0, 3.0).unwrap();
    assert!(tone.flatness(5, 12.0) < 0.05);
}

#[test]
fn kojo_register_split_and_comparison() {
    let score = parse_text_score(include_str!("../../../scores/kojo_no_tsuki.txt")).unwrap();
    let regs = registers(&score, &RegisterBounds::default());
    let profile = ActuationProfile::default();
    let cfg = AnalysisConfig::default();
    let (on, clock) = render_with(&score, &profile, &SynthConfig::default(), true);
    let (off, _) = render_with(&score, &profile, &SynthConfig::default(), false);
    let on = analyze(&on, &clock, 440.0, &cfg).unwrap();
    let off = analyze(&off, &clock, 440.0, &cfg).unwrap();
    let c = compare_delta_spl(&on.harmonic_list(), &off.harmonic_list(), &regs).unwrap();
    assert!(c.low_all_increased);
    assert!(!c.middle_consistent_change);
    assert!(c.middle_max_abs_difference_db.unwrap() < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn harmonic_tones_track_within_five_cents(semitones in 0.0f64..37.0, phase in 0.0f64..TAU) {
        let f0 = 261.625_565 * 2f64.powf(semitones / 12.0);
        let n = 13_230;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / f64::from(FS);
                (1..=6)
                    .filter(|&h| f64::from(h) * f0 < 20_000.0)
                    .map(|h| (TAU * f64::from(h) * f0 * t + phase * f64::from(h)).sin() / f64::from(h))
                    .sum::<f64>()
                    * 0.3
            })
            .collect();
        let track = estimate_f0(&AudioBuffer::new(FS, samples), 40.0, 10.0, 200.0, 2500.0).unwrap();
        prop_assert!(track.voiced().count() > 0);
        for (_, f) in track.voiced() {
            prop_assert!(cents(f, f0).unwrap().abs() <= 5.0, "{} Hz for {} Hz", f, f0);
        }
    }
}

/// Median bin level of a spectrogram frame, in dB re the spectrogram maximum.
fn floor_db(s: &flute_twin::analysis::Spectrogram, frame: usize) -> f64 {
    let mut row = s.magnitude_db[frame].clone();
    row.sort_by(f64::total_cmp);
    row[row.len() / 2]
}

#[test]
fn key_clicks_show_as_streaks_at_transitions() {
    let score = Score::chromatic(60, 96, 500.0).unwrap();
    let table = FingeringTable::default();
    let cfg = SchedulerConfig::default();
    let tl = build_timeline(&score, &table, &ActuationProfile::default(), &cfg).unwrap();
    let clicks = SynthConfig {
        key_click_enabled: true,
        ..SynthConfig::default()
    };
    let on = spectrogram(&render(&tl, &table, &clicks).unwrap(), 12.0, 3.0).unwrap();
    let off = spectrogram(&render(&tl, &table, &SynthConfig::default()).unwrap(), 12.0, 3.0).unwrap();
    let frame_at = |t: f64| {
        (0..on.times_ms.len())
            .min_by(|&a, &b| (on.times_ms[a] - t).abs().total_cmp(&(on.times_ms[b] - t).abs()))
            .unwrap()
    };
    let mut lifts = Vec::new();
    for j in 1..score.len() {
        let windows: Vec<(f64, f64)> = tl
            .key_events()
            .filter(|e| e.note_index == j)
            .map(|e| (e.motion_start_ms, e.motion_end_ms))
            .collect();
        let start = windows.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
        let end = windows.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
        // a streak column while keys travel
        let k = frame_at(0.5 * (start + end));
        lifts.push(floor_db(&on, k) - floor_db(&off, k));
        // and nothing mid-note, far from any key movement
        let quiet = frame_at(tl.onset_ms(j) + 250.0);
        assert!((floor_db(&on, quiet) - floor_db(&off, quiet)).abs() < 1.0, "note {j}");
    }
    let weakest = lifts.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(weakest > 20.0, "{lifts:?}");
}
