use std::path::Path;

use super::CorpusError;

/// Mono PCM audio scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a 16-bit mono PCM WAV file, dividing samples by 32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, CorpusError> {
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate == 0 {
        return Err(CorpusError::CorruptHeader("zero sample rate".into()));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    if samples.is_empty() {
        return Err(CorpusError::EmptyAudio);
    }
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

fn map_hound(e: hound::Error) -> CorpusError {
    match e {
        hound::Error::IoError(io) => CorpusError::Io(io),
        hound::Error::Unsupported => CorpusError::UnsupportedFormat("unsupported wav encoding".into()),
        hound::Error::FormatError(msg) => CorpusError::CorruptHeader(msg.to_string()),
        other => CorpusError::CorruptHeader(other.to_string()),
    }
}
