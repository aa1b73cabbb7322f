use std::f64::consts::TAU;

use flute_twin::midi_ingest::parse_text_score;
use flute_twin::scheduler::{build_timeline, ActuationProfile, ActuationTimeline, SchedulerConfig};
use flute_twin::synth::{note_to_freq, render, render_sustained, JetState, SynthError};
use flute_twin::{AudioBuffer, FingeringTable, Score, SynthConfig};

/// Hann-windowed DTFT magnitude of `x` at `f` Hz.
fn level(x: &[f64], fs: f64, f: f64) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let w = 0.5 - 0.5 * (TAU * i as f64 / n).cos();
        let ph = TAU * f * i as f64 / fs;
        re += v * w * ph.cos();
        im -= v * w * ph.sin();
    }
    (re * re + im * im).sqrt()
}

/// Strongest frequency within ±`span` cents of `around`, on a 0.25-cent grid.
fn strongest(x: &[f64], fs: f64, around: f64, span: f64) -> f64 {
    let steps = (span / 0.25) as i32;
    (-steps..=steps)
        .map(|k| around * 2f64.powf(f64::from(k) * 0.25 / 1200.0))
        .max_by(|a, b| level(x, fs, *a).total_cmp(&level(x, fs, *b)))
        .unwrap()
}

fn cents(f: f64, reference: f64) -> f64 {
    1200.0 * (f / reference).log2()
}

fn timeline(score: &Score, assist: bool) -> ActuationTimeline {
    let cfg = SchedulerConfig {
        assist,
        ..SchedulerConfig::default()
    };
    build_timeline(score, &FingeringTable::default(), &ActuationProfile::default(), &cfg).unwrap()
}

fn segment(audio: &AudioBuffer, from_ms: f64, to_ms: f64) -> &[f64] {
    &audio.samples[audio.index_at(from_ms)..audio.index_at(to_ms)]
}

#[test]
fn equal_temperament() {
    assert_eq!(note_to_freq(69, 440.0).unwrap(), 440.0);
    assert!((note_to_freq(60, 440.0).unwrap() - 261.625_565_300_6).abs() < 1e-9);
    assert!((note_to_freq(96, 440.0).unwrap() - 2_093.004_522_404_8).abs() < 1e-9);
    assert!((note_to_freq(69, 442.0).unwrap() - 442.0).abs() < 1e-12);
    assert_eq!(note_to_freq(128, 440.0), Err(SynthError::Range(128)));
}

#[test]
fn every_note_sounds_at_its_pitch() {
    let score = Score::chromatic(60, 96, 500.0).unwrap();
    let tl = timeline(&score, true);
    let audio = render(&tl, &FingeringTable::default(), &SynthConfig::default()).unwrap();
    let fs = f64::from(audio.sample_rate_hz);
    for (i, note) in tl.audio_score().events().iter().enumerate() {
        let x = segment(&audio, note.onset_ms + 100.0, note.end_ms() - 100.0);
        let target = 440.0 * 2f64.powf((f64::from(note.midi_note) - 69.0) / 12.0);
        let f = strongest(x, fs, target, 30.0);
        assert!(cents(f, target).abs() <= 5.0, "note {i}: {f:.2} Hz vs {target:.2} Hz");
    }
}

#[test]
fn a4_reference() {
    let audio = render_sustained(440.0, 1000.0, JetState::MIDDLE, &SynthConfig::default()).unwrap();
    let f = strongest(segment(&audio, 100.0, 900.0), 44_100.0, 440.0, 30.0);
    assert!(cents(f, 440.0).abs() <= 5.0);
    assert!((audio.peak() - 0.9).abs() < 1e-12);
    assert_eq!(audio.len(), 44_100);
}

#[test]
fn jet_activation_raises_h2_over_h3() {
    let cfg = SynthConfig::default();
    let f0 = 440.0;
    let delta = |a: f64| {
        let audio = render_sustained(f0, 800.0, JetState::new(a), &cfg).unwrap();
        let x = segment(&audio, 100.0, 700.0);
        20.0 * (level(x, 44_100.0, 2.0 * f0) / level(x, 44_100.0, 3.0 * f0)).log10()
    };
    let (d0, d5, d1) = (delta(0.0), delta(0.5), delta(1.0));
    // 1/h series: h2/h3 = 3/2 with no offset, ±jet_gain_db each way at full activation
    let base = 20.0 * 1.5f64.log10();
    assert!((d0 - base).abs() < 0.05, "{d0}");
    assert!((d5 - (base + 3.0)).abs() < 0.05, "{d5}");
    assert!((d1 - (base + 6.0)).abs() < 0.05, "{d1}");
    assert!(d0 < d5 && d5 < d1);
}

#[test]
fn silence_between_and_after_notes() {
    let score = parse_text_score("A4 300\nR 200\nC5 300").unwrap();
    let tl = timeline(&score, false);
    let audio = render(&tl, &FingeringTable::default(), &SynthConfig::default()).unwrap();
    let lead = tl.lead_in_ms;
    assert!(segment(&audio, 0.0, lead).iter().all(|&s| s == 0.0));
    assert!(segment(&audio, lead + 300.0, lead + 500.0).iter().all(|&s| s == 0.0));
    assert!(segment(&audio, lead + 800.0, audio.duration_ms()).iter().all(|&s| s == 0.0));
    assert!((audio.duration_ms() - (lead + 800.0 + 250.0)).abs() < 0.1);
    assert!(segment(&audio, lead + 100.0, lead + 200.0).iter().any(|&s| s.abs() > 0.1));
}

#[test]
fn clicks_are_seeded_and_confined_to_key_travel() {
    let score = parse_text_score("G4 300\nE4 300\nA4 300").unwrap();
    let tl = timeline(&score, false);
    let table = FingeringTable::default();
    let clean = render(&tl, &table, &SynthConfig::default()).unwrap();
    let clicky = SynthConfig {
        key_click_enabled: true,
        seed: 7,
        ..SynthConfig::default()
    };
    let a = render(&tl, &table, &clicky).unwrap();
    let b = render(&tl, &table, &clicky).unwrap();
    assert_eq!(a, b);
    let c = render(&tl, &table, &SynthConfig { seed: 8, ..clicky.clone() }).unwrap();
    assert_ne!(a, c);

    // undo the different peak normalization, then compare sample by sample
    let probe = a.index_at(tl.lead_in_ms + 150.0);
    let k = clean.samples[probe] / a.samples[probe];
    let fs = 44_100.0;
    let windows: Vec<(f64, f64)> = tl
        .key_events()
        .map(|e| (e.motion_start_ms, e.motion_end_ms))
        .collect();
    // (difference, number of keys travelling at that sample)
    let mut noise = Vec::new();
    for (i, (&x, &y)) in clean.samples.iter().zip(&a.samples).enumerate() {
        let t = i as f64 * 1000.0 / fs;
        let moving = windows.iter().filter(|&&(s, e)| t >= s && t < e).count();
        let near = windows.iter().any(|&(s, e)| t >= s - 0.05 && t < e + 0.05);
        let d = y * k - x;
        if moving > 0 {
            noise.push((d, moving as f64));
        } else if !near {
            assert!(d.abs() < 1e-9, "click outside key travel at {t:.2} ms");
        }
    }
    assert!(noise.iter().any(|(d, _)| d.abs() > 1e-4));
    // each travelling key adds independent noise at −20 dB re the steady tone
    let per_key_rms = (noise.iter().map(|(d, _)| d * d).sum::<f64>()
        / noise.iter().map(|(_, c)| c).sum::<f64>())
    .sqrt();
    let steady = segment(&clean, tl.lead_in_ms + 100.0, tl.lead_in_ms + 200.0);
    let steady_rms = (steady.iter().map(|v| v * v).sum::<f64>() / steady.len() as f64).sqrt();
    let rel_db = 20.0 * (per_key_rms / steady_rms).log10();
    assert!((rel_db + 20.0).abs() < 0.5, "click level {rel_db:.2} dB");
}

#[test]
fn rendering_is_deterministic() {
    let score = Score::chromatic(60, 72, 200.0).unwrap();
    let tl = timeline(&score, true);
    let table = FingeringTable::default();
    let cfg = SynthConfig::default();
    assert_eq!(render(&tl, &table, &cfg).unwrap(), render(&tl, &table, &cfg).unwrap());
}

#[test]
fn config_is_validated() {
    let bad = SynthConfig {
        n_harmonics: 2,
        ..SynthConfig::default()
    };
    assert!(matches!(
        render_sustained(440.0, 100.0, JetState::MIDDLE, &bad),
        Err(SynthError::Config(_))
    ));
}
