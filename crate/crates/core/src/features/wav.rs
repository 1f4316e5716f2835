use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Loads a 16-bit PCM mono WAV file, scaling samples to `[-1, 1)`.
pub fn read_wav(path: &Path, utterance_id: &str, speaker_id: &str) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Utterance {
            utterance_id: utterance_id.to_string(),
            detail: format!(
                "{}: expected 16-bit PCM mono, got {} channel(s), {} bits",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            ),
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Waveform {
        utterance_id: utterance_id.to_string(),
        speaker_id: speaker_id.to_string(),
        samples,
        sample_rate: spec.sample_rate,
    })
}
