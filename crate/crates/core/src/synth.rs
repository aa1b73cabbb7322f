//! Additive flute model driven by an actuation timeline.
//!
//! The sounding pitch follows whatever fingering the keys currently form, so
//! transient fingerings during a transition are audible. A breath gate opens
//! only inside note intervals, and the head-joint angle sets the balance of
//! the 2nd and 3rd harmonics.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fingering::FingeringTable;
use crate::scheduler::{ActuationTimeline, EventKind, SchedulerError};

/// Time for the tone to fade in or out when the fingering switches between a
/// playable and an unplayable mask.
const PITCH_SLEW_MS: f64 = 5.0;
/// Silence appended after the last note.
const TAIL_MS: f64 = 250.0;
const PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible timeline: {0}")]
    InfeasibleTimeline(#[from] SchedulerError),
    #[error("MIDI note {0} is outside 0-127")]
    Range(i32),
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub sample_rate_hz: u32,
    pub a4_hz: f64,
    pub n_harmonics: usize,
    /// Harmonic 2 gains and harmonic 3 loses this many dB at full jet activation.
    pub jet_gain_db: f64,
    pub key_click_enabled: bool,
    /// Click noise RMS relative to the unmodified tone RMS.
    pub key_click_db: f64,
    pub onset_ramp_ms: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 44_100,
            a4_hz: 440.0,
            n_harmonics: 8,
            jet_gain_db: 3.0,
            key_click_enabled: false,
            key_click_db: -20.0,
            onset_ramp_ms: 20.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.sample_rate_hz == 0 {
            return fail("sample_rate_hz must be positive");
        }
        if !(self.a4_hz > 0.0 && self.a4_hz.is_finite()) {
            return fail("a4_hz must be positive");
        }
        if self.n_harmonics < 3 {
            return fail("n_harmonics must be at least 3");
        }
        if !(self.jet_gain_db >= 0.0 && self.jet_gain_db.is_finite()) {
            return fail("jet_gain_db must be non-negative");
        }
        if !(self.onset_ramp_ms >= 0.0 && self.onset_ramp_ms.is_finite()) {
            return fail("onset_ramp_ms must be non-negative");
        }
        if !self.key_click_db.is_finite() {
            return fail("key_click_db must be finite");
        }
        Ok(())
    }

    fn samples(&self, ms: f64) -> usize {
        (ms * f64::from(self.sample_rate_hz) / 1000.0).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudioBuffer {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate_hz: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate_hz,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate_hz)
    }

    pub fn index_at(&self, ms: f64) -> usize {
        ((ms * f64::from(self.sample_rate_hz) / 1000.0).round().max(0.0) as usize).min(self.len())
    }

    /// Samples in `[start_ms, end_ms)`, clipped to the buffer.
    pub fn slice_ms(&self, start_ms: f64, end_ms: f64) -> AudioBuffer {
        let (a, b) = (self.index_at(start_ms), self.index_at(end_ms));
        AudioBuffer::new(self.sample_rate_hz, self.samples[a..b.max(a)].to_vec())
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer::new(
            self.sample_rate_hz,
            self.samples.iter().map(|x| x * gain).collect(),
        )
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Jet-offset configuration: 0 is the middle-register setting, 1 the
/// low-register setting with the head joint fully rotated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JetState {
    activation: f64,
}

impl JetState {
    pub const MIDDLE: JetState = JetState { activation: 0.0 };
    pub const LOW: JetState = JetState { activation: 1.0 };

    pub fn new(activation: f64) -> Self {
        Self {
            activation: activation.clamp(0.0, 1.0),
        }
    }

    pub fn activation(self) -> f64 {
        self.activation
    }
}

/// Equal-tempered frequency of a MIDI note.
pub fn note_to_freq(midi_note: i32, a4_hz: f64) -> Result<f64, SynthError> {
    if !(0..=127).contains(&midi_note) {
        return Err(SynthError::Range(midi_note));
    }
    Ok(a4_hz * 2f64.powf(f64::from(midi_note - 69) / 12.0))
}

/// Linear amplitude of harmonic `h` (1-based) for a jet state.
pub fn harmonic_amplitudes(h: usize, jet: JetState, cfg: &SynthConfig) -> f64 {
    let base = 1.0 / h as f64;
    let shift_db = cfg.jet_gain_db * jet.activation;
    match h {
        2 => base * db_to_gain(shift_db),
        3 => base * db_to_gain(-shift_db),
        _ => base,
    }
}

fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Per-sample control signals for the oscillator.
struct Controls {
    /// Fundamental in Hz; `None` while the fingering is unplayable.
    freq: Vec<Option<f64>>,
    breath: Vec<f64>,
    activation: Vec<f64>,
}

fn oscillate(c: &Controls, cfg: &SynthConfig) -> Vec<f64> {
    let fs = f64::from(cfg.sample_rate_hz);
    let nyquist = fs / 2.0;
    let slew_step = if PITCH_SLEW_MS > 0.0 {
        1000.0 / (PITCH_SLEW_MS * fs)
    } else {
        1.0
    };
    let mut phase = 0.0f64;
    let mut gate = 0.0f64;
    let mut last_freq = 0.0f64;
    let mut amps = vec![0.0; cfg.n_harmonics + 1];
    let mut amps_for = f64::NAN;
    let mut out = Vec::with_capacity(c.freq.len());
    for i in 0..c.freq.len() {
        let target = match c.freq[i] {
            Some(f) => {
                last_freq = f;
                1.0
            }
            None => 0.0,
        };
        gate = if gate < target {
            (gate + slew_step).min(target)
        } else {
            (gate - slew_step).max(target)
        };
        let env = gate * c.breath[i];
        if c.activation[i] != amps_for {
            amps_for = c.activation[i];
            let jet = JetState::new(amps_for);
            for (h, a) in amps.iter_mut().enumerate().skip(1) {
                *a = harmonic_amplitudes(h, jet, cfg);
            }
        }
        let mut s = 0.0;
        if env > 0.0 {
            for (h, a) in amps.iter().enumerate().skip(1) {
                if h as f64 * last_freq >= nyquist {
                    break;
                }
                s += a * (h as f64 * phase).sin();
            }
        }
        out.push(env * s);
        phase = (phase + TAU * last_freq / fs) % TAU;
    }
    out
}

/// RMS of the unmodified harmonic series below Nyquist at unit amplitude.
fn tone_rms(cfg: &SynthConfig) -> f64 {
    let sum: f64 = (1..=cfg.n_harmonics)
        .map(|h| harmonic_amplitudes(h, JetState::MIDDLE, cfg).powi(2))
        .sum();
    (sum / 2.0).sqrt()
}

fn breath_gate(len: usize, notes: &[(f64, f64)], cfg: &SynthConfig) -> Vec<f64> {
    let fs = f64::from(cfg.sample_rate_hz);
    let mut gate = vec![0.0; len];
    for &(on, end) in notes {
        let ramp = cfg.onset_ramp_ms.min((end - on) / 2.0);
        let (a, b) = (cfg.samples(on).min(len), cfg.samples(end).min(len));
        for (i, g) in gate.iter_mut().enumerate().take(b).skip(a) {
            let t = i as f64 * 1000.0 / fs;
            let level = if ramp > 0.0 {
                ((t - on) / ramp).min((end - t) / ramp).clamp(0.0, 1.0)
            } else {
                1.0
            };
            *g = level;
        }
    }
    gate
}

fn peak_normalize(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let k = PEAK / peak;
        samples.iter_mut().for_each(|x| *x *= k);
    }
}

/// Renders the performance described by `timeline`.
pub fn render(
    timeline: &ActuationTimeline,
    table: &FingeringTable,
    cfg: &SynthConfig,
) -> Result<AudioBuffer, SynthError> {
    cfg.validate()?;
    timeline.validate()?;
    let notes: Vec<(f64, f64)> = timeline
        .audio_score()
        .events()
        .iter()
        .map(|n| (n.onset_ms, n.end_ms()))
        .collect();
    let end_ms = notes.last().map_or(timeline.lead_in_ms, |n| n.1) + TAIL_MS;
    let len = cfg.samples(end_ms);
    let fs = f64::from(cfg.sample_rate_hz);
    let at = |i: usize| i as f64 * 1000.0 / fs;

    // Pitch follows the fingering; ambiguous masks resolve toward the note
    // being prepared by the latest completed key movement.
    let changes = timeline.fingering_changes();
    let mut freq = Vec::with_capacity(len);
    let mut c = 0;
    for i in 0..len {
        while c + 1 < changes.len() && changes[c + 1].0 <= at(i) {
            c += 1;
        }
        let (_, mask, note_index) = changes[c];
        let intended = timeline.score.events()[note_index].midi_note;
        freq.push(
            table
                .sounding_note(mask, intended)
                .map(|n| note_to_freq(i32::from(n), cfg.a4_hz))
                .transpose()?,
        );
    }

    let mut activation = vec![0.0; len];
    let mut head: Vec<_> = timeline.head_events().collect();
    head.sort_by(|a, b| a.motion_start_ms.total_cmp(&b.motion_start_ms));
    let mut state = 0.0;
    for (k, ev) in head.iter().enumerate() {
        let target = match ev.kind {
            EventKind::HeadRotateTo => 1.0,
            _ => 0.0,
        };
        let until = head.get(k + 1).map_or(end_ms, |n| n.motion_start_ms);
        let (a, b) = (cfg.samples(ev.motion_start_ms).min(len), cfg.samples(until).min(len));
        for (i, v) in activation.iter_mut().enumerate().take(b).skip(a) {
            let x = ((at(i) - ev.motion_start_ms) / (ev.motion_end_ms - ev.motion_start_ms))
                .clamp(0.0, 1.0);
            *v = state + (target - state) * x;
        }
        state = target;
    }

    let breath = breath_gate(len, &notes, cfg);
    let mut samples = oscillate(
        &Controls {
            freq,
            breath,
            activation,
        },
        cfg,
    );

    if cfg.key_click_enabled {
        let level = db_to_gain(cfg.key_click_db) * tone_rms(cfg) * 3f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for ev in timeline.key_events() {
            let (a, b) = (
                cfg.samples(ev.motion_start_ms).min(len),
                cfg.samples(ev.motion_end_ms).min(len),
            );
            for s in &mut samples[a..b] {
                *s += level * rng.random_range(-1.0..=1.0);
            }
        }
    }
    peak_normalize(&mut samples);
    Ok(AudioBuffer::new(cfg.sample_rate_hz, samples))
}

/// A single steady tone at `freq_hz` with fixed jet state, ramped like a
/// scored note and peak-normalized like [`render`].
pub fn render_sustained(
    freq_hz: f64,
    duration_ms: f64,
    jet: JetState,
    cfg: &SynthConfig,
) -> Result<AudioBuffer, SynthError> {
    cfg.validate()?;
    let len = cfg.samples(duration_ms);
    let mut samples = oscillate(
        &Controls {
            freq: vec![Some(freq_hz); len],
            breath: breath_gate(len, &[(0.0, duration_ms)], cfg),
            activation: vec![jet.activation(); len],
        },
        cfg,
    );
    peak_normalize(&mut samples);
    Ok(AudioBuffer::new(cfg.sample_rate_hz, samples))
}
