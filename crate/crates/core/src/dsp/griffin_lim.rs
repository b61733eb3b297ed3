use rustfft::num_complex::Complex;

use super::stft::{hann_window, istft_with, stft_with, FftPair, MagnitudeSpectrogram, StftConfig};
use super::AudioClip;
use crate::error::{Error, Result};

/// Reconstructed clip plus the consistency error `|| |STFT(x_t)| - M ||` after every iteration.
#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub clip: AudioClip,
    pub errors: Vec<f64>,
}

/// Distance between the magnitudes of `spec` and the target, measured over the
/// full two-sided spectrum so it agrees with the time-domain least-squares
/// projection done by the inverse STFT.
fn consistency_error(
    spec: &[Complex<f64>],
    target: &MagnitudeSpectrogram,
) -> f64 {
    let last = target.bins - 1;
    let mut acc = 0.0;
    for b in 0..target.bins {
        let weight = if b == 0 || b == last { 1.0 } else { 2.0 };
        let row = b * target.frames;
        for t in 0..target.frames {
            let d = spec[row + t].norm() - target.values[row + t];
            acc += weight * d * d;
        }
    }
    acc.sqrt()
}

/// Griffin-Lim phase reconstruction from zero initial phase.
pub fn griffin_lim(target: &MagnitudeSpectrogram, iterations: usize) -> Result<GriffinLimOutput> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("griffin-lim needs at least one iteration".into()));
    }
    if let Some(i) = target.values.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite(format!("griffin-lim target magnitude {i}")));
    }
    if let Some(i) = target.values.iter().position(|&v| v < 0.0 || v.is_infinite()) {
        return Err(Error::InvalidArgument(format!(
            "griffin-lim target magnitude {i} = {} is not a finite non-negative value",
            target.values[i]
        )));
    }
    let cfg = StftConfig::default();
    if target.bins != cfg.bins() || target.frames == 0 {
        return Err(Error::Shape(format!(
            "griffin-lim target is {}x{}, expected {} bins",
            target.bins,
            target.frames,
            cfg.bins()
        )));
    }
    let length = (target.frames - 1) * cfg.hop;
    let window = hann_window(cfg.frame_size);
    let fft = FftPair::new(cfg.fft_size);

    let mut spec = super::stft::ComplexSpectrogram {
        bins: target.bins,
        frames: target.frames,
        values: target.values.iter().map(|&m| Complex::new(m, 0.0)).collect(),
    };
    let mut signal = istft_with(&spec, &cfg, &window, &fft, length)?;
    let mut errors = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let est = stft_with(&signal, &cfg, &window, &fft);
        errors.push(consistency_error(&est.values, target));
        if it + 1 == iterations {
            break;
        }
        for ((s, e), &m) in spec.values.iter_mut().zip(&est.values).zip(&target.values) {
            let n = e.norm();
            *s = if n > 0.0 { e * (m / n) } else { Complex::new(m, 0.0) };
        }
        signal = istft_with(&spec, &cfg, &window, &fft, length)?;
    }
    Ok(GriffinLimOutput {
        clip: AudioClip::new(signal, super::SAMPLE_RATE)?,
        errors,
    })
}
