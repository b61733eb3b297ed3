//! Conversion between 16 kHz waveforms and 128x128 log-mel-spectrograms.
//!
//! Analysis: Hann-windowed STFT (800-sample frames, 200-sample hop, 1024-point
//! FFT, centered with zero padding) -> 128 triangular mel filters spanning
//! 125 Hz..7.6 kHz -> magnitude floor of 0.01 -> 20*log10. The 81 natural
//! frames of a one-second clip are padded with floor columns to 128.
//!
//! Synthesis: undo the log, apply the filterbank pseudoinverse, clip negative
//! magnitudes and run Griffin-Lim.

mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, GriffinLimOutput};
pub use mel::{
    audio_to_mel, hz_to_mel, mel_filterbank_matrix, mel_to_audio, mel_to_hz, MelFilterbank,
    MelInverter, MelSpectrogram,
};
pub use stft::{
    hann_window, istft, overlap_add, stft, stft_complex, ComplexSpectrogram,
    MagnitudeSpectrogram, StftConfig,
};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// Every clip is exactly one second long after padding.
pub const CLIP_SAMPLES: usize = 16_000;
/// 50 ms analysis frame.
pub const FRAME_SIZE: usize = 800;
/// 12.5 ms hop.
pub const FRAME_HOP: usize = 200;
pub const FFT_SIZE: usize = 1024;
pub const FREQ_BINS: usize = FFT_SIZE / 2 + 1;
/// Centered frames in one padded clip: `1 + CLIP_SAMPLES / FRAME_HOP`.
pub const NATURAL_FRAMES: usize = 1 + CLIP_SAMPLES / FRAME_HOP;
pub const N_MELS: usize = 128;
pub const MEL_FRAMES: usize = 128;
pub const F_MIN: f64 = 125.0;
pub const F_MAX: f64 = 7600.0;
pub const MAG_FLOOR: f64 = 0.01;
/// `20 * log10(MAG_FLOOR)`.
pub const DB_FLOOR: f64 = -40.0;
pub const GRIFFIN_LIM_ITERS: usize = 60;
/// Floor columns inserted before the natural frames.
pub const PAD_LEFT: usize = (MEL_FRAMES - NATURAL_FRAMES) / 2;

/// One second of mono 16 kHz audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
}

impl AudioClip {
    /// Validates and zero-pads `samples` at the end to [`CLIP_SAMPLES`].
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::ResampleRequired {
                expected: SAMPLE_RATE,
                found: sample_rate,
            });
        }
        if samples.len() > CLIP_SAMPLES {
            return Err(Error::ClipTooLong {
                len: samples.len(),
                max: CLIP_SAMPLES,
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        let mut samples = samples;
        samples.resize(CLIP_SAMPLES, 0.0);
        Ok(Self { samples })
    }

    pub fn silence() -> Self {
        Self {
            samples: vec![0.0; CLIP_SAMPLES],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}
