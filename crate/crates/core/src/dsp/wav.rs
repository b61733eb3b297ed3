use std::path::Path;

use super::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Reads a 16-bit PCM mono 16 kHz WAV file, zero-padding to one second.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::ResampleRequired {
            expected: SAMPLE_RATE,
            found: spec.sample_rate,
        });
    }
    if spec.channels != 1 {
        return Err(Error::WavFormat(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::WavFormat(format!(
            "{}-bit {:?} samples, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a clip as 16-bit PCM mono 16 kHz, clamping to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in clip.samples() {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quantizes_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f64> = (0..8000).map(|i| ((i as f64) * 0.01).sin() * 0.7).collect();
        write_wav(&path, &AudioClip::new(x.clone(), SAMPLE_RATE).unwrap()).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples().len(), 16000);
        for (a, b) in x.iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
        assert!(back.samples()[8000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(Error::ResampleRequired { found: 8000, .. })
        ));
    }
}
