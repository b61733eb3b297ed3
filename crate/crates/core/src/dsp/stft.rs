use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FFT_SIZE, FRAME_HOP, FRAME_SIZE};
use crate::error::{Error, Result};

/// Short-time Fourier transform geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub fft_size: usize,
    /// Pad `frame_size / 2` zeros on both sides so frame `t` is centered on sample `t * hop`.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_size: FRAME_SIZE,
            hop: FRAME_HOP,
            fft_size: FFT_SIZE,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn pad(&self) -> usize {
        if self.center {
            self.frame_size / 2
        } else {
            0
        }
    }

    pub fn frame_count(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        if padded < self.frame_size {
            0
        } else {
            1 + (padded - self.frame_size) / self.hop
        }
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided complex spectrogram, stored bin-major: `values[bin * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<Complex<f64>>,
}

impl ComplexSpectrogram {
    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            bins: self.bins,
            frames: self.frames,
            values: self.values.iter().map(|c| c.norm()).collect(),
        }
    }
}

/// Non-negative magnitudes, stored bin-major like [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

impl MagnitudeSpectrogram {
    pub fn new(bins: usize, frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(Error::Shape(format!(
                "{} magnitudes for {bins}x{frames} grid",
                values.len()
            )));
        }
        Ok(Self {
            bins,
            frames,
            values,
        })
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    /// Index of the largest-magnitude bin in `frame`.
    pub fn argmax_bin(&self, frame: usize) -> usize {
        (0..self.bins)
            .max_by(|&a, &b| self.get(a, frame).total_cmp(&self.get(b, frame)))
            .unwrap_or(0)
    }
}

pub(crate) struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub(crate) fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }
}

pub(crate) fn stft_with(
    signal: &[f64],
    cfg: &StftConfig,
    window: &[f64],
    fft: &FftPair,
) -> ComplexSpectrogram {
    let pad = cfg.pad();
    let frames = cfg.frame_count(signal.len());
    let bins = cfg.bins();
    let mut values = vec![Complex::new(0.0, 0.0); bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        let start = (t * cfg.hop) as isize - pad as isize;
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < signal.len() {
                buf[i] = Complex::new(signal[idx as usize] * w, 0.0);
            }
        }
        fft.forward.process(&mut buf);
        for b in 0..bins {
            values[b * frames + t] = buf[b];
        }
    }
    ComplexSpectrogram {
        bins,
        frames,
        values,
    }
}

/// Least-squares inverse of [`stft_with`]: windowed overlap-add normalized by
/// the summed squared window.
pub(crate) fn istft_with(
    spec: &ComplexSpectrogram,
    cfg: &StftConfig,
    window: &[f64],
    fft: &FftPair,
    length: usize,
) -> Result<Vec<f64>> {
    if spec.bins != cfg.bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, expected {}",
            spec.bins,
            cfg.bins()
        )));
    }
    let pad = cfg.pad();
    let total = (spec.frames.saturating_sub(1)) * cfg.hop + cfg.frame_size;
    let mut acc = vec![0.0; total.max(length + pad)];
    let mut energy = vec![0.0; acc.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let n = cfg.fft_size;
    for t in 0..spec.frames {
        for b in 0..spec.bins {
            buf[b] = spec.values[b * spec.frames + t];
        }
        // Hermitian extension so the inverse transform is real
        buf[0].im = 0.0;
        if n % 2 == 0 {
            buf[n / 2].im = 0.0;
        }
        for b in spec.bins..n {
            buf[b] = buf[n - b].conj();
        }
        fft.inverse.process(&mut buf);
        let start = t * cfg.hop;
        for (i, w) in window.iter().enumerate() {
            acc[start + i] += w * buf[i].re / n as f64;
            energy[start + i] += w * w;
        }
    }
    let mut out = Vec::with_capacity(length);
    for i in 0..length {
        let e = energy[pad + i];
        if e <= 1e-12 {
            return Err(Error::ZeroWindowEnergy(i));
        }
        out.push(acc[pad + i] / e);
    }
    Ok(out)
}

/// Complex STFT of a raw signal.
pub fn stft_complex(signal: &[f64], cfg: &StftConfig) -> ComplexSpectrogram {
    stft_with(signal, cfg, &hann_window(cfg.frame_size), &FftPair::new(cfg.fft_size))
}

/// Magnitude STFT of a clip with the default analysis settings.
pub fn stft(clip: &AudioClip) -> MagnitudeSpectrogram {
    stft_complex(clip.samples(), &StftConfig::default()).magnitude()
}

/// Inverse STFT returning `length` samples.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, length: usize) -> Result<Vec<f64>> {
    istft_with(
        spec,
        cfg,
        &hann_window(cfg.frame_size),
        &FftPair::new(cfg.fft_size),
        length,
    )
}

/// Plain windowed overlap-add of time-domain frames, without normalization.
pub fn overlap_add(frames: &[Vec<f64>], window: &[f64], hop: usize) -> Vec<f64> {
    if frames.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; (frames.len() - 1) * hop + window.len()];
    for (t, frame) in frames.iter().enumerate() {
        for (i, (x, w)) in frame.iter().zip(window).enumerate() {
            out[t * hop + i] += x * w;
        }
    }
    out
}
