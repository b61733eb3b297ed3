//! Mel-spectrogram rendering to PNG: time runs left to right, frequency bottom
//! to top, colors span a fixed [-40, 0] dB range.

use std::io::BufWriter;
use std::path::Path;

use crate::dsp::{MelSpectrogram, DB_FLOOR, MEL_FRAMES, N_MELS};
use crate::error::{Error, Result};

/// Perceptually ordered dark-blue to yellow ramp.
const PALETTE: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Color of a dB value on the fixed scale.
pub fn color(db: f32) -> [u8; 3] {
    let t = ((db as f64 - DB_FLOOR) / -DB_FLOOR).clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (PALETTE[i][k] + (PALETTE[i + 1][k] - PALETTE[i][k]) * f).round() as u8;
    }
    out
}

/// RGB raster, row-major from the top-left corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

/// Renders each cell as a `scale x scale` block.
pub fn render(mel: &MelSpectrogram, scale: usize) -> Result<Image> {
    if scale == 0 {
        return Err(Error::InvalidArgument("plot scale must be at least 1".into()));
    }
    let (width, height) = (MEL_FRAMES * scale, N_MELS * scale);
    let mut rgb = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let band = N_MELS - 1 - y / scale;
        for x in 0..width {
            rgb.extend_from_slice(&color(mel.get(band, x / scale)));
        }
    }
    Ok(Image { width, height, rgb })
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(Error::Image)?;
        w.write_image_data(&img.rgb).map_err(Error::Image)?;
    }
    Ok(out)
}

pub fn write_png(mel: &MelSpectrogram, path: impl AsRef<Path>, scale: usize) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(&render(mel, scale)?)?;
    std::fs::write(path, bytes).map_err(|e| Error::io_at(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_is_uniform() {
        let img = render(&MelSpectrogram::silence(), 1).unwrap();
        assert_eq!((img.width, img.height), (128, 128));
        assert!(img.rgb.chunks(3).all(|p| p == color(-40.0)));
    }

    #[test]
    fn low_bands_are_at_the_bottom() {
        let mut v = vec![-40.0f32; MelSpectrogram::LEN];
        v[5] = 0.0;
        let img = render(&MelSpectrogram::new(v).unwrap(), 2).unwrap();
        let px = |x: usize, y: usize| &img.rgb[(y * img.width + x) * 3..][..3];
        assert_eq!(px(10, 255), color(0.0));
        assert_eq!(px(11, 254), color(0.0));
        assert_eq!(px(10, 0), color(-40.0));
        assert_eq!(px(12, 255), color(-40.0));
    }

    #[test]
    fn scale_is_fixed_and_images_differ() {
        assert_eq!(color(-60.0), color(-40.0));
        assert_eq!(color(5.0), color(0.0));
        assert_ne!(color(-20.0), color(-19.0));
        let a = encode_png(&render(&MelSpectrogram::silence(), 1).unwrap()).unwrap();
        let b = encode_png(&render(&MelSpectrogram::new(vec![-10.0; MelSpectrogram::LEN]).unwrap(), 1).unwrap()).unwrap();
        assert_ne!(a, b);
        assert_eq!(&a[1..4], b"PNG");
        assert!(render(&MelSpectrogram::silence(), 0).is_err());
    }
}
