use std::collections::BTreeMap;

use crate::autodiff::{ResamplePlan, Tensor};
use crate::dsp::{MelSpectrogram, DB_FLOOR, MEL_FRAMES};
use crate::error::{Error, Result};

/// Resolutions a mel-spectrogram is served at.
pub const RESOLUTIONS: [usize; 5] = [8, 16, 32, 64, 128];

/// Maps dB values so that `[-40, 0]` becomes `[-1, 1]`.
pub fn normalize_db(v: f32) -> f32 {
    (v - DB_FLOOR as f32) / 20.0 - 1.0
}

pub fn denormalize_db(v: f32) -> f32 {
    (v + 1.0) * 20.0 + DB_FLOOR as f32
}

/// Halves a square grid repeatedly by 2x2 averaging, which equals bilinear
/// reduction with half-pixel centers at each factor-2 step.
pub fn downsample(grid: &[f32], size: usize, target: usize) -> Result<Vec<f32>> {
    if grid.len() != size * size {
        return Err(Error::Shape(format!("{} values for a {size}x{size} grid", grid.len())));
    }
    if target == 0 || target > size || size % target != 0 || !(size / target).is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "cannot reduce a {size}x{size} grid to {target}x{target}"
        )));
    }
    let mut cur = grid.to_vec();
    let mut n = size;
    while n > target {
        let h = n / 2;
        let mut next = vec![0f32; h * h];
        for y in 0..h {
            for x in 0..h {
                let a = cur[2 * y * n + 2 * x];
                let b = cur[2 * y * n + 2 * x + 1];
                let c = cur[(2 * y + 1) * n + 2 * x];
                let d = cur[(2 * y + 1) * n + 2 * x + 1];
                next[y * h + x] = ((a + b) + (c + d)) * 0.25;
            }
        }
        cur = next;
        n = h;
    }
    Ok(cur)
}

/// Doubles a square grid repeatedly with half-pixel bilinear interpolation,
/// the same upsampling the generator uses between stages.
pub fn upsample(grid: &[f32], size: usize, target: usize) -> Result<Vec<f32>> {
    if grid.len() != size * size {
        return Err(Error::Shape(format!("{} values for a {size}x{size} grid", grid.len())));
    }
    if size == 0 || target < size || target % size != 0 || !(target / size).is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "cannot enlarge a {size}x{size} grid to {target}x{target}"
        )));
    }
    let mut cur: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
    let mut n = size;
    while n < target {
        let mut next = vec![0.0; 4 * n * n];
        ResamplePlan::upsample2(n, n).apply_plane(&cur, &mut next);
        cur = next;
        n *= 2;
    }
    Ok(cur.into_iter().map(|v| v as f32).collect())
}

/// Converts a normalized `r x r` network output into a 128x128 dB
/// mel-spectrogram, raising values below the floor.
pub fn network_output_to_mel(grid: &[f32], size: usize) -> Result<MelSpectrogram> {
    let full = upsample(grid, size, MEL_FRAMES)?;
    MelSpectrogram::from_clamped(full.into_iter().map(denormalize_db).collect())
}

/// Resizes a normalized `[n, 1, r, r]` batch to `target` by averaging or upsampling.
pub fn resize_batch(x: &Tensor<f32>, target: usize) -> Result<Tensor<f32>> {
    let s = x.shape();
    if s.len() != 4 || s[1] != 1 || s[2] != s[3] {
        return Err(Error::Shape(format!("expected [n, 1, r, r], got {s:?}")));
    }
    let (n, r) = (s[0], s[2]);
    if r == target {
        return Ok(x.clone());
    }
    let mut data = Vec::with_capacity(n * target * target);
    for i in 0..n {
        let plane = &x.data()[i * r * r..(i + 1) * r * r];
        if r > target {
            data.extend(downsample(plane, r, target)?);
        } else {
            data.extend(upsample(plane, r, target)?);
        }
    }
    Ok(Tensor::new(&[n, 1, target, target], data))
}

/// Reduces a 128x128 mel-spectrogram to one of [`RESOLUTIONS`].
pub fn downsample_mel(mel: &MelSpectrogram, target: usize) -> Result<Vec<f32>> {
    if !RESOLUTIONS.contains(&target) {
        return Err(Error::InvalidArgument(format!(
            "unsupported resolution {target}, expected one of {RESOLUTIONS:?}"
        )));
    }
    downsample(mel.values(), MEL_FRAMES, target)
}

/// All served resolutions of one mel-spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionPyramid {
    pub levels: BTreeMap<usize, Vec<f32>>,
}

impl ResolutionPyramid {
    pub fn new(mel: &MelSpectrogram) -> Self {
        let mut levels = BTreeMap::new();
        let mut cur = mel.values().to_vec();
        let mut n = MEL_FRAMES;
        levels.insert(n, cur.clone());
        while n > RESOLUTIONS[0] {
            cur = downsample(&cur, n, n / 2).expect("halving a power-of-two grid");
            n /= 2;
            levels.insert(n, cur.clone());
        }
        Self { levels }
    }

    pub fn level(&self, resolution: usize) -> Option<&[f32]> {
        self.levels.get(&resolution).map(Vec::as_slice)
    }
}
