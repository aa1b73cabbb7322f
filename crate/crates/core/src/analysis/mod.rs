//! Acoustic evaluation: f0 tracking, pitch verdicts against a score,
//! spectrograms and 2nd/3rd harmonic level analysis.

mod f0;
mod harmonics;
mod spectrogram;
mod verdict;

pub use f0::{estimate_f0, F0Frame, F0Track};
pub use harmonics::{
    compare_delta_spl, harmonic_report, harmonic_spl, stable_segment, DeltaComparison,
    DeltaRow, HarmonicReport,
};
pub use spectrogram::{hann, spectrogram, Spectrogram};
pub use verdict::{verify_pitch, PitchFlag, PitchVerdict};

use serde::Serialize;

use crate::fingering::RegisterBounds;
use crate::midi_ingest::Score;
use crate::synth::AudioBuffer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("note {note_index} lasts {duration_ms} ms; more than {min_ms} ms is needed")]
    NoteTooShort {
        note_index: usize,
        duration_ms: f64,
        min_ms: f64,
    },
    #[error("report lists differ in length ({on} vs {off})")]
    LengthMismatch { on: usize, off: usize },
}

/// Cents from `f_target` to `f`.
pub fn cents(f: f64, f_target: f64) -> Result<f64, AnalysisError> {
    if !(f > 0.0 && f_target > 0.0) || !f.is_finite() || !f_target.is_finite() {
        return Err(AnalysisError::Domain(format!(
            "cents needs positive frequencies, got {f} and {f_target}"
        )));
    }
    Ok(1200.0 * (f / f_target).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub tol_cents: f64,
    pub spectrogram_window_ms: f64,
    pub spectrogram_hop_ms: f64,
    pub trim_ms: f64,
    pub search_cents: f64,
    pub fft_size: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            frame_ms: 40.0,
            hop_ms: 10.0,
            fmin_hz: 200.0,
            fmax_hz: 2500.0,
            tol_cents: 50.0,
            spectrogram_window_ms: 12.0,
            spectrogram_hop_ms: 3.0,
            trim_ms: 100.0,
            search_cents: 15.0,
            fft_size: 1 << 15,
        }
    }
}

impl AnalysisConfig {
    /// Checks ranges, and that every ±`search_cents` window around the 2nd
    /// harmonic of the lowest note contains an FFT bin at `sample_rate_hz`.
    pub fn validate(&self, sample_rate_hz: u32) -> Result<(), AnalysisError> {
        let fs = f64::from(sample_rate_hz);
        let fail = |m: String| Err(AnalysisError::Domain(m));
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return fail("frame and hop must be positive".into());
        }
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return fail(format!("need 0 < fmin < fmax, got {} and {}", self.fmin_hz, self.fmax_hz));
        }
        if fs < 4.0 * self.fmax_hz {
            return fail(format!("sample rate {fs} Hz is below 4 × fmax"));
        }
        if !(self.tol_cents > 0.0 && self.search_cents > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if !(self.trim_ms >= 0.0 && self.spectrogram_hop_ms > 0.0) {
            return fail("trim must be non-negative and spectrogram hop positive".into());
        }
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return fail(format!("fft_size {} must be a power of two", self.fft_size));
        }
        let lowest = 2.0 * crate::synth::note_to_freq(i32::from(crate::LOWEST_NOTE), 440.0)
            .expect("in range");
        let width = lowest * (2f64.powf(self.search_cents / 1200.0) - 2f64.powf(-self.search_cents / 1200.0));
        if fs / self.fft_size as f64 > width {
            return fail(format!(
                "{} Hz bins are wider than the ±{} cent search window ({width:.2} Hz)",
                fs / self.fft_size as f64,
                self.search_cents
            ));
        }
        Ok(())
    }
}

/// Everything the evaluation pipeline produces for one recording.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub verdicts: Vec<PitchVerdict>,
    /// `None` for notes too short for a stable segment or past the end of
    /// the recording.
    pub harmonics: Vec<Option<HarmonicReport>>,
}

impl AnalysisReport {
    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|v| v.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn harmonic_list(&self) -> Vec<HarmonicReport> {
        self.harmonics.iter().flatten().cloned().collect()
    }
}

/// Runs pitch verification and harmonic analysis of `audio` against `score`
/// (already on the audio clock).
pub fn analyze(
    audio: &AudioBuffer,
    score: &Score,
    a4_hz: f64,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, AnalysisError> {
    cfg.validate(audio.sample_rate_hz)?;
    let track = estimate_f0(audio, cfg.frame_ms, cfg.hop_ms, cfg.fmin_hz, cfg.fmax_hz)?;
    let verdicts = verify_pitch(&track, score, cfg.tol_cents, a4_hz)?;
    let mut harmonics = Vec::with_capacity(score.len());
    for (i, note) in score.events().iter().enumerate() {
        // a recording cut short has nothing to measure for the missing notes
        if note.end_ms() - cfg.trim_ms > audio.duration_ms() {
            harmonics.push(None);
            continue;
        }
        harmonics.push(match harmonic_report(audio, note, i, a4_hz, cfg) {
            Ok(r) => Some(r),
            Err(AnalysisError::NoteTooShort { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    Ok(AnalysisReport {
        verdicts,
        harmonics,
    })
}

/// Register of every note of `score`.
pub fn registers(score: &Score, bounds: &RegisterBounds) -> Vec<crate::Register> {
    score
        .events()
        .iter()
        .map(|n| bounds.classify(n.midi_note).expect("score notes are in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cents_closed_form() {
        assert_eq!(cents(440.0, 440.0).unwrap(), 0.0);
        let f = 523.0 * 2f64.powf(50.0 / 1200.0);
        assert!((cents(f, 523.0).unwrap() - 50.0).abs() < 1e-9);
        assert!((cents(466.1638, 440.0).unwrap() - 100.0).abs() < 0.01);
        assert!(cents(0.0, 440.0).is_err());
        assert!(cents(440.0, -1.0).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        AnalysisConfig::default().validate(44_100).unwrap();
        let coarse = AnalysisConfig {
            fft_size: 1 << 10,
            ..AnalysisConfig::default()
        };
        assert!(coarse.validate(44_100).is_err());
        assert!(AnalysisConfig::default().validate(8_000).is_err());
    }
}
