use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use super::AnalysisError;
use crate::synth::AudioBuffer;

const MIN_CORRELATION: f64 = 0.5;
const SILENCE_RMS: f64 = 1e-4;
/// Earliest peak reaching this fraction of the best peak wins, which keeps
/// the estimate off subharmonic lags.
const PEAK_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F0Frame {
    /// Frame centre.
    pub time_ms: f64,
    pub f0_hz: Option<f64>,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F0Track {
    pub frames: Vec<F0Frame>,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl F0Track {
    pub fn voiced(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.frames
            .iter()
            .filter_map(|f| f.f0_hz.map(|hz| (f.time_ms, hz)))
    }

    /// Same track with every voiced f0 multiplied by `ratio`.
    pub fn transposed(&self, ratio: f64) -> F0Track {
        let mut t = self.clone();
        for f in &mut t.frames {
            f.f0_hz = f.f0_hz.map(|hz| hz * ratio);
        }
        t
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ms,f0_hz,correlation\n");
        for f in &self.frames {
            let hz = f.f0_hz.map_or(String::new(), |hz| format!("{hz:.4}"));
            out.push_str(&format!("{:.2},{hz},{:.4}\n", f.time_ms, f.correlation));
        }
        out
    }
}

/// Frame-wise normalized-autocorrelation pitch tracker.
pub fn estimate_f0(
    audio: &AudioBuffer,
    frame_ms: f64,
    hop_ms: f64,
    fmin: f64,
    fmax: f64,
) -> Result<F0Track, AnalysisError> {
    let fs = f64::from(audio.sample_rate_hz);
    if !(fmin > 0.0 && fmin < fmax) {
        return Err(AnalysisError::Domain(format!("need 0 < fmin < fmax, got {fmin}, {fmax}")));
    }
    if fs < 4.0 * fmax {
        return Err(AnalysisError::Domain(format!("sample rate {fs} Hz is below 4 × fmax")));
    }
    let n = (frame_ms * fs / 1000.0).round() as usize;
    let hop = (hop_ms * fs / 1000.0).round() as usize;
    let min_lag = ((fs / fmax).floor() as usize).max(2);
    let max_lag = (fs / fmin).ceil() as usize;
    if hop == 0 || n < 2 * max_lag {
        return Err(AnalysisError::Domain(format!(
            "a {frame_ms} ms frame is too short for fmin = {fmin} Hz"
        )));
    }

    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    let mut prefix = vec![0.0; n + 1];
    let mut r = vec![0.0; max_lag + 2];

    let mut frames = Vec::new();
    let mut start = 0;
    while start + n <= audio.len() {
        let x = &audio.samples[start..start + n];
        let time_ms = (start as f64 + n as f64 / 2.0) * 1000.0 / fs;
        for i in 0..n {
            prefix[i + 1] = prefix[i] + x[i] * x[i];
        }
        let rms = (prefix[n] / n as f64).sqrt();
        let mut frame = F0Frame {
            time_ms,
            f0_hz: None,
            correlation: 0.0,
        };
        if rms >= SILENCE_RMS {
            for (b, &v) in buf.iter_mut().zip(x) {
                *b = Complex::new(v, 0.0);
            }
            buf[n..].iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
            fwd.process(&mut buf);
            buf.iter_mut().for_each(|b| *b = Complex::new(b.norm_sqr(), 0.0));
            inv.process(&mut buf);
            for (lag, slot) in r.iter_mut().enumerate().take(max_lag + 2).skip(min_lag - 1) {
                let head = prefix[n - lag];
                let tail = prefix[n] - prefix[lag];
                let denom = (head * tail).sqrt();
                *slot = if denom > 0.0 { buf[lag].re / size as f64 / denom } else { 0.0 };
            }
            if let Some((lag, peak)) = pick_peak(&r, min_lag, max_lag) {
                frame.correlation = peak;
                if peak >= MIN_CORRELATION {
                    let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
                    let curv = a - 2.0 * b + c;
                    let delta = if curv < 0.0 { (0.5 * (a - c) / curv).clamp(-0.5, 0.5) } else { 0.0 };
                    frame.f0_hz = Some(fs / (lag as f64 + delta));
                }
            }
        }
        frames.push(frame);
        start += hop;
    }
    Ok(F0Track {
        frames,
        frame_ms,
        hop_ms,
    })
}

fn pick_peak(r: &[f64], min_lag: usize, max_lag: usize) -> Option<(usize, f64)> {
    let is_peak = |k: usize| r[k] >= r[k - 1] && r[k] >= r[k + 1];
    let best = (min_lag..=max_lag)
        .filter(|&k| is_peak(k))
        .map(|k| r[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() || best <= 0.0 {
        return None;
    }
    (min_lag..=max_lag)
        .find(|&k| is_peak(k) && r[k] >= PEAK_FRACTION * best)
        .map(|k| (k, r[k]))
}
