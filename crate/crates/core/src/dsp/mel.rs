use log::warn;
use nalgebra::DMatrix;

use super::griffin_lim::griffin_lim;
use super::stft::{stft, MagnitudeSpectrogram};
use super::{
    AudioClip, DB_FLOOR, FFT_SIZE, FREQ_BINS, F_MAX, F_MIN, MAG_FLOOR, MEL_FRAMES,
    NATURAL_FRAMES, N_MELS, PAD_LEFT, SAMPLE_RATE,
};
use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters, one row per band, peak-normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub bins: usize,
    /// `n_mels * bins`, row-major.
    pub weights: Vec<f64>,
    /// The `n_mels + 2` mel-equally-spaced edge frequencies in Hz.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    /// The filterbank used throughout: 128 bands, 125 Hz..7.6 kHz, 1024-point FFT at 16 kHz.
    pub fn standard() -> Self {
        mel_filterbank_matrix(N_MELS, F_MIN, F_MAX, FFT_SIZE, SAMPLE_RATE)
            .expect("standard filterbank parameters are valid")
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.bins..(band + 1) * self.bins]
    }

    /// Center frequency of each band in Hz.
    pub fn centers_hz(&self) -> &[f64] {
        &self.edges_hz[1..self.n_mels + 1]
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_mels, self.bins, &self.weights)
    }

    /// Applies the filterbank to every frame: `(n_mels x bins) . (bins x frames)`.
    pub fn apply(&self, mag: &MagnitudeSpectrogram) -> Vec<f64> {
        assert_eq!(mag.bins, self.bins, "filterbank/spectrogram bin mismatch");
        let mut out = vec![0.0; self.n_mels * mag.frames];
        for m in 0..self.n_mels {
            let row = self.row(m);
            for (b, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &mag.values[b * mag.frames..(b + 1) * mag.frames];
                let dst = &mut out[m * mag.frames..(m + 1) * mag.frames];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

pub fn mel_filterbank_matrix(
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    fft_size: usize,
    sample_rate: u32,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"
        )));
    }
    let bins = fft_size / 2 + 1;
    if n_mels + 2 > bins {
        return Err(Error::InvalidArgument(format!(
            "{n_mels} mel bands need more than the {bins} available frequency bins"
        )));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = &mut weights[m * bins..(m + 1) * bins];
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            *w = up.min(down).max(0.0);
        }
        let peak = row.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mel band {m} ({left:.1}..{right:.1} Hz) contains no frequency bin"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(MelFilterbank {
        n_mels,
        bins,
        weights,
        edges_hz,
    })
}

/// A 128-band x 128-frame log-magnitude (dB) mel-spectrogram, band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f32>,
}

impl MelSpectrogram {
    pub const LEN: usize = N_MELS * MEL_FRAMES;

    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != Self::LEN {
            return Err(Error::Shape(format!(
                "mel-spectrogram needs {} values, got {}",
                Self::LEN,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("mel value {i}")));
        }
        if let Some(i) = values.iter().position(|&v| (v as f64) < DB_FLOOR) {
            return Err(Error::InvalidArgument(format!(
                "mel value {i} = {} below the {DB_FLOOR} dB floor",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    /// Builds a spectrogram from unconstrained values, raising anything below the floor.
    pub fn from_clamped(values: Vec<f32>) -> Result<Self> {
        Self::new(
            values
                .into_iter()
                .map(|v| if v.is_nan() { v } else { v.max(DB_FLOOR as f32) })
                .collect(),
        )
    }

    pub fn silence() -> Self {
        Self {
            values: vec![DB_FLOOR as f32; Self::LEN],
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * MEL_FRAMES + frame]
    }

    pub fn db_floor(&self) -> f64 {
        DB_FLOOR
    }
}

/// Log-mel-spectrogram of a clip, padded to 128 frames with floor columns.
pub fn audio_to_mel(clip: &AudioClip, fb: &MelFilterbank) -> MelSpectrogram {
    let mag = stft(clip);
    let mel = fb.apply(&mag);
    let floor = DB_FLOOR as f32;
    let mut values = vec![floor; MelSpectrogram::LEN];
    for m in 0..N_MELS {
        for t in 0..mag.frames {
            let v = mel[m * mag.frames + t].max(MAG_FLOOR);
            values[m * MEL_FRAMES + PAD_LEFT + t] = (20.0 * v.log10()) as f32;
        }
    }
    MelSpectrogram { values }
}

/// Mel-to-linear magnitude mapping through the filterbank pseudoinverse.
#[derive(Debug, Clone)]
pub struct MelInverter {
    /// `bins x n_mels`, row-major.
    pinv: Vec<f64>,
    bins: usize,
    n_mels: usize,
    condition_number: f64,
}

impl MelInverter {
    /// Condition numbers above this are reported as ill-conditioned.
    pub const CONDITION_LIMIT: f64 = 1e8;

    pub fn new(fb: &MelFilterbank) -> Self {
        let m = fb.matrix();
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition_number > Self::CONDITION_LIMIT {
            warn!(
                "mel filterbank pseudoinverse is ill-conditioned (condition number {condition_number:.3e})"
            );
        }
        let pinv = svd
            .pseudo_inverse(smax * 1e-12)
            .expect("svd computed with both factors");
        let mut data = Vec::with_capacity(fb.bins * fb.n_mels);
        for r in 0..fb.bins {
            for c in 0..fb.n_mels {
                data.push(pinv[(r, c)]);
            }
        }
        Self {
            pinv: data,
            bins: fb.bins,
            n_mels: fb.n_mels,
            condition_number,
        }
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_number > Self::CONDITION_LIMIT
    }

    /// `bins x n_mels` pseudoinverse entry.
    pub fn entry(&self, bin: usize, band: usize) -> f64 {
        self.pinv[bin * self.n_mels + band]
    }

    /// Linear-frequency magnitudes for the natural frames of `mel`, negatives clipped to 0.
    pub fn linear_magnitudes(&self, mel: &MelSpectrogram) -> MagnitudeSpectrogram {
        let frames = NATURAL_FRAMES;
        let mut lin_mel = vec![0.0; self.n_mels * frames];
        for m in 0..self.n_mels {
            for t in 0..frames {
                lin_mel[m * frames + t] = 10f64.powf(mel.get(m, PAD_LEFT + t) as f64 / 20.0);
            }
        }
        let mut values = vec![0.0; self.bins * frames];
        for b in 0..self.bins {
            let row = &self.pinv[b * self.n_mels..(b + 1) * self.n_mels];
            let dst = &mut values[b * frames..(b + 1) * frames];
            for (m, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&lin_mel[m * frames..(m + 1) * frames]) {
                    *d += p * s;
                }
            }
            dst.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        MagnitudeSpectrogram {
            bins: self.bins,
            frames,
            values,
        }
    }

    pub fn invert(&self, mel: &MelSpectrogram, iterations: usize) -> Result<AudioClip> {
        Ok(griffin_lim(&self.linear_magnitudes(mel), iterations)?.clip)
    }
}

/// Waveform from a log-mel-spectrogram via pseudoinverse and Griffin-Lim.
pub fn mel_to_audio(mel: &MelSpectrogram, fb: &MelFilterbank, iterations: usize) -> Result<AudioClip> {
    debug_assert_eq!(fb.bins, FREQ_BINS);
    MelInverter::new(fb).invert(mel, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_of_700_hz() {
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filterbank_structure() {
        let fb = MelFilterbank::standard();
        assert_eq!((fb.n_mels, fb.bins, fb.edges_hz.len()), (128, 513, 130));
        let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
        for m in 0..fb.n_mels {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row.iter().copied().fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
            let nz: Vec<usize> = (0..fb.bins).filter(|&b| row[b] > 0.0).collect();
            assert!(!nz.is_empty());
            // contiguous support strictly inside the frequency range
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
            assert!(nz[0] as f64 * bin_hz > F_MIN);
            assert!((*nz.last().unwrap() as f64) * bin_hz < F_MAX);
        }
        let centers = fb.centers_hz();
        assert!(centers.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn too_many_bands_rejected() {
        assert!(mel_filterbank_matrix(64, 0.0, 8000.0, 64, 16000).is_err());
        assert!(mel_filterbank_matrix(8, 500.0, 100.0, 1024, 16000).is_err());
        assert!(mel_filterbank_matrix(8, 100.0, 9000.0, 1024, 16000).is_err());
    }

    #[test]
    fn silence_maps_to_floor() {
        let mel = audio_to_mel(&AudioClip::silence(), &MelFilterbank::standard());
        assert!(mel.values().iter().all(|&v| v == -40.0));
    }

    #[test]
    fn pseudoinverse_reproduces_row_space() {
        let fb = MelFilterbank::standard();
        let inv = MelInverter::new(&fb);
        // fb . pinv . fb == fb
        let mut max_err: f64 = 0.0;
        for m in 0..fb.n_mels {
            let mut row_pinv = vec![0.0; fb.n_mels];
            for (k, slot) in row_pinv.iter_mut().enumerate() {
                *slot = (0..fb.bins).map(|b| fb.row(m)[b] * inv.entry(b, k)).sum();
            }
            for b in 0..fb.bins {
                let v: f64 = (0..fb.n_mels).map(|k| row_pinv[k] * fb.row(k)[b]).sum();
                max_err = max_err.max((v - fb.row(m)[b]).abs());
            }
        }
        assert!(max_err < 1e-8, "{max_err}");
    }

    #[test]
    fn tone_survives_mel_round_trip() {
        let fb = MelFilterbank::standard();
        assert!(!MelInverter::new(&fb).is_ill_conditioned());
        let sr = SAMPLE_RATE as f64;
        for f in [440.0, 1000.0] {
            let x: Vec<f64> = (0..16000)
                .map(|n| 0.5 * (2.0 * std::f64::consts::PI * f * n as f64 / sr).sin())
                .collect();
            let clip = AudioClip::new(x, SAMPLE_RATE).unwrap();
            let y = mel_to_audio(&audio_to_mel(&clip, &fb), &fb, 60).unwrap();
            let peak_hz = stft(&y).argmax_bin(40) as f64 * sr / FFT_SIZE as f64;
            // one band spans edge k to edge k+2 around the tone
            let k = fb.edges_hz.iter().rposition(|&e| e <= f).unwrap();
            let width = fb.edges_hz[k + 2] - fb.edges_hz[k];
            assert!((peak_hz - f).abs() <= width, "{f} Hz came back at {peak_hz} Hz");
        }
    }
}
