use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use super::{hann, AnalysisConfig, AnalysisError};
use crate::fingering::Register;
use crate::midi_ingest::NoteEvent;
use crate::synth::{note_to_freq, AudioBuffer};

/// Largest of these two differences that still counts as "no change".
const MIDDLE_CHANGE_DB: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicReport {
    pub note_index: usize,
    pub f0_hz: f64,
    pub spl2_db: f64,
    pub spl3_db: f64,
    pub delta_spl_db: f64,
}

impl HarmonicReport {
    pub fn new(note_index: usize, f0_hz: f64, spl2_db: f64, spl3_db: f64) -> Self {
        Self {
            note_index,
            f0_hz,
            spl2_db,
            spl3_db,
            delta_spl_db: spl2_db - spl3_db,
        }
    }
}

/// The note's audio without its first and last `trim_ms`.
pub fn stable_segment(
    audio: &AudioBuffer,
    note: &NoteEvent,
    trim_ms: f64,
) -> Result<AudioBuffer, AnalysisError> {
    if note.duration_ms <= 2.0 * trim_ms {
        return Err(AnalysisError::NoteTooShort {
            note_index: 0,
            duration_ms: note.duration_ms,
            min_ms: 2.0 * trim_ms,
        });
    }
    Ok(audio.slice_ms(note.onset_ms + trim_ms, note.end_ms() - trim_ms))
}

/// Level of harmonic `h` of `f0` in dB re full scale: the largest Hann-windowed
/// FFT magnitude among bins centred within ±`search_cents` of `h·f0`, refined
/// to the spectral maximum between the neighbouring bins.
pub fn harmonic_spl(
    segment: &AudioBuffer,
    f0: f64,
    h: u32,
    search_cents: f64,
    fft_size: usize,
) -> Result<f64, AnalysisError> {
    let fs = f64::from(segment.sample_rate_hz);
    let target = f64::from(h) * f0;
    let (lo, hi) = (
        target * 2f64.powf(-search_cents / 1200.0),
        target * 2f64.powf(search_cents / 1200.0),
    );
    if !(f0 > 0.0) || hi >= fs / 2.0 {
        return Err(AnalysisError::Domain(format!(
            "harmonic {h} of {f0} Hz is not below Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    if segment.is_empty() || fft_size < 2 {
        return Err(AnalysisError::Domain("empty segment or FFT".into()));
    }
    let bin_hz = fs / fft_size as f64;
    let (k_lo, k_hi) = ((lo / bin_hz).ceil() as usize, (hi / bin_hz).floor() as usize);
    if k_lo > k_hi {
        return Err(AnalysisError::Domain(format!(
            "no {bin_hz:.3} Hz bin within ±{search_cents} cents of {target:.2} Hz"
        )));
    }
    let len = segment.len().min(fft_size);
    let w = hann(len);
    let gain: f64 = w.iter().sum::<f64>() / 2.0;
    let mut buf: Vec<Complex<f64>> = (0..fft_size)
        .map(|i| Complex::new(if i < len { segment.samples[i] * w[i] } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(fft_size).process(&mut buf);
    let k = (k_lo..=k_hi)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .expect("non-empty bin range");
    // Refine between the neighbouring bins on the windowed signal's DTFT,
    // which removes the Hann scalloping loss of the bin grid.
    let xw: Vec<f64> = (0..len).map(|i| segment.samples[i] * w[i]).collect();
    let a = ((k as f64 - 1.0) * bin_hz).max(lo);
    let b = ((k as f64 + 1.0) * bin_hz).min(hi);
    let peak = golden_max(|f| dtft_magnitude(&xw, f / fs), a, b).max(buf[k].norm());
    Ok(20.0 * (peak / gain).max(1e-15).log10())
}

fn dtft_magnitude(x: &[f64], cycles_per_sample: f64) -> f64 {
    let step = Complex::from_polar(1.0, -std::f64::consts::TAU * cycles_per_sample);
    let mut rot = Complex::new(1.0, 0.0);
    let mut acc = Complex::new(0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        acc += rot * v;
        rot *= step;
        if n % 1024 == 1023 {
            // keep the rotator on the unit circle
            rot /= rot.norm();
        }
    }
    acc.norm()
}

/// Maximum of a unimodal function on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// ΔSPL of one scored note, measured at the note's nominal f0.
pub fn harmonic_report(
    audio: &AudioBuffer,
    note: &NoteEvent,
    note_index: usize,
    a4_hz: f64,
    cfg: &AnalysisConfig,
) -> Result<HarmonicReport, AnalysisError> {
    let segment = stable_segment(audio, note, cfg.trim_ms).map_err(|e| match e {
        AnalysisError::NoteTooShort {
            duration_ms,
            min_ms,
            ..
        } => AnalysisError::NoteTooShort {
            note_index,
            duration_ms,
            min_ms,
        },
        other => other,
    })?;
    let f0 = note_to_freq(i32::from(note.midi_note), a4_hz)
        .map_err(|e| AnalysisError::Domain(e.to_string()))?;
    let spl2 = harmonic_spl(&segment, f0, 2, cfg.search_cents, cfg.fft_size)?;
    let spl3 = harmonic_spl(&segment, f0, 3, cfg.search_cents, cfg.fft_size)?;
    Ok(HarmonicReport::new(note_index, f0, spl2, spl3))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub note_index: usize,
    pub register: Register,
    pub delta_on_db: f64,
    pub delta_off_db: f64,
    pub difference_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaComparison {
    pub rows: Vec<DeltaRow>,
    /// Every Low note has a larger ΔSPL with the assist on.
    pub low_all_increased: bool,
    /// All Middle notes moved the same way by at least 0.5 dB.
    pub middle_consistent_change: bool,
    pub middle_max_abs_difference_db: Option<f64>,
}

/// Per-note ΔSPL(on) − ΔSPL(off), with the register-wise summary.
pub fn compare_delta_spl(
    on: &[HarmonicReport],
    off: &[HarmonicReport],
    registers: &[Register],
) -> Result<DeltaComparison, AnalysisError> {
    if on.len() != off.len() || on.len() != registers.len() {
        return Err(AnalysisError::LengthMismatch {
            on: on.len(),
            off: if on.len() != off.len() { off.len() } else { registers.len() },
        });
    }
    let rows: Vec<DeltaRow> = on
        .iter()
        .zip(off)
        .zip(registers)
        .map(|((a, b), &register)| DeltaRow {
            note_index: a.note_index,
            register,
            delta_on_db: a.delta_spl_db,
            delta_off_db: b.delta_spl_db,
            difference_db: a.delta_spl_db - b.delta_spl_db,
        })
        .collect();
    let low: Vec<f64> = rows
        .iter()
        .filter(|r| r.register == Register::Low)
        .map(|r| r.difference_db)
        .collect();
    let middle: Vec<f64> = rows
        .iter()
        .filter(|r| r.register == Register::Middle)
        .map(|r| r.difference_db)
        .collect();
    let middle_consistent_change = !middle.is_empty()
        && (middle.iter().all(|&d| d >= MIDDLE_CHANGE_DB)
            || middle.iter().all(|&d| d <= -MIDDLE_CHANGE_DB));
    Ok(DeltaComparison {
        low_all_increased: !low.is_empty() && low.iter().all(|&d| d > 0.0),
        middle_consistent_change,
        middle_max_abs_difference_db: middle.iter().map(|d| d.abs()).reduce(f64::max),
        rows,
    })
}
