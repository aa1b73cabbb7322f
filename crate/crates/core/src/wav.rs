//! 16-bit PCM mono WAV files.

use std::path::Path;

use crate::synth::AudioBuffer;

const FULL_SCALE: f64 = 32767.0;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("WAV error: {0}")]
    Format(String),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => WavError::Io(io),
            other => WavError::Format(other.to_string()),
        }
    }
}

fn spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn write_wav(buffer: &AudioBuffer, path: &Path) -> Result<(), WavError> {
    let mut w = hound::WavWriter::create(path, spec(buffer.sample_rate_hz))?;
    for &x in &buffer.samples {
        w.write_sample((x.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a 16-bit mono file written by [`write_wav`] (or any 16-bit PCM mono
/// WAV).
pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    let mut r = hound::WavReader::open(path)?;
    let s = r.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(WavError::Format(format!(
            "expected 16-bit PCM mono, got {} channel(s) at {} bits",
            s.channels, s.bits_per_sample
        )));
    }
    let samples = r
        .samples::<i16>()
        .map(|x| x.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AudioBuffer::new(s.sample_rate, samples))
}
