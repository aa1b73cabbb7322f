use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use super::AnalysisError;
use crate::synth::AudioBuffer;

const MIN_WINDOW: usize = 32;
/// Level given to empty bins, in dB re max.
const FLOOR_DB: f64 = -200.0;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrogram {
    /// Frame centres.
    pub times_ms: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// `magnitude_db[frame][bin]`, dB relative to the largest magnitude.
    pub magnitude_db: Vec<Vec<f64>>,
    /// Energy of each windowed frame, from its spectrum.
    pub frame_energy: Vec<f64>,
    pub window_ms: f64,
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_size: usize,
}

impl Spectrogram {
    /// Index of the strongest bin in a frame.
    pub fn peak_bin(&self, frame: usize) -> usize {
        self.magnitude_db[frame]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k)
    }

    /// Fraction of bins in a frame within `db` of the frame's strongest bin;
    /// close to 1 for broadband (click-like) frames.
    pub fn flatness(&self, frame: usize, db: f64) -> f64 {
        let row = &self.magnitude_db[frame];
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter().filter(|&&v| v >= top - db).count() as f64 / row.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ms");
        for f in &self.freqs_hz {
            out.push_str(&format!(",{f:.2}"));
        }
        out.push('\n');
        for (t, row) in self.times_ms.iter().zip(&self.magnitude_db) {
            out.push_str(&format!("{t:.2}"));
            for v in row {
                out.push_str(&format!(",{v:.1}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Hann-windowed short-time magnitude spectrum.
pub fn spectrogram(
    audio: &AudioBuffer,
    window_ms: f64,
    hop_ms: f64,
) -> Result<Spectrogram, AnalysisError> {
    let fs = f64::from(audio.sample_rate_hz);
    let n = (window_ms * fs / 1000.0).round() as usize;
    let hop = (hop_ms * fs / 1000.0).round() as usize;
    if n < MIN_WINDOW || hop == 0 {
        return Err(AnalysisError::Domain(format!(
            "a {window_ms} ms window at {fs} Hz is under {MIN_WINDOW} samples, or the hop is empty"
        )));
    }
    let size = n.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
    let w = hann(n);
    let bins = size / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    let mut mags = Vec::new();
    let mut times_ms = Vec::new();
    let mut frame_energy = Vec::new();
    let mut start = 0;
    while start + n <= audio.len() {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(if k < n { audio.samples[start + k] * w[k] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        let row: Vec<f64> = buf[..bins].iter().map(|c| c.norm()).collect();
        let energy = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / size as f64;
        frame_energy.push(energy);
        mags.push(row);
        times_ms.push((start as f64 + n as f64 / 2.0) * 1000.0 / fs);
        start += hop;
    }
    let max = mags.iter().flatten().copied().fold(0.0, f64::max);
    let magnitude_db = mags
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|m| {
                    if max > 0.0 && m > 0.0 {
                        (20.0 * (m / max).log10()).max(FLOOR_DB)
                    } else {
                        FLOOR_DB
                    }
                })
                .collect()
        })
        .collect();
    Ok(Spectrogram {
        times_ms,
        freqs_hz: (0..bins).map(|k| k as f64 * fs / size as f64).collect(),
        magnitude_db,
        frame_energy,
        window_ms,
        window_len: n,
        hop_len: hop,
        fft_size: size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let a = AudioBuffer::new(44_100, vec![0.1; 4410]);
        let s = spectrogram(&a, 12.0, 3.0).unwrap();
        assert_eq!(s.window_len, 529);
        assert_eq!(s.fft_size, 1024);
        assert_eq!(s.freqs_hz.len(), 513);
        assert_eq!(s.times_ms.len(), (4410 - 529) / 132 + 1);
        assert!(s.magnitude_db.iter().all(|r| r.len() == 513));
    }

    #[test]
    fn window_too_small() {
        let a = AudioBuffer::new(1_000, vec![0.0; 1000]);
        assert!(spectrogram(&a, 12.0, 3.0).is_err());
    }

    #[test]
    fn periodic_hann() {
        let w = hann(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[2] - 0.5).abs() < 1e-15);
    }
}
