//! A small synthetic two-class corpus: low harmonic tones versus high-band
//! noise bursts, both with random onset, length, level and pitch.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MelCache;
use crate::dsp::{audio_to_mel, write_wav, AudioClip, MelFilterbank, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const TOY_CLASSES: [&str; 2] = ["low", "high"];

/// One synthetic clip of class `label` (0 or 1).
pub fn synthesize_clip<R: Rng>(label: usize, rng: &mut R) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let onset = rng.gen_range(0.05..0.35);
    let dur = rng.gen_range(0.35..0.55);
    let level = rng.gen_range(0.1..0.4);
    let partials: Vec<(f64, f64, f64)> = match label {
        0 => {
            let f0 = rng.gen_range(110.0..220.0);
            (1..=6)
                .map(|k| (f0 * k as f64, 1.0 / k as f64, rng.gen_range(0.0..2.0 * PI)))
                .collect()
        }
        1 => (0..40)
            .map(|_| (rng.gen_range(3000.0..5500.0), 0.25, rng.gen_range(0.0..2.0 * PI)))
            .collect(),
        _ => panic!("toy label {label} out of range"),
    };
    let samples = (0..CLIP_SAMPLES)
        .map(|n| {
            let t = n as f64 / sr;
            let u = (t - onset) / dur;
            if !(0.0..1.0).contains(&u) {
                return 0.0;
            }
            let env = (PI * u).sin();
            let s: f64 = partials
                .iter()
                .map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum();
            level * env * s / partials.len() as f64 * 2.0
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("synthetic clip is valid")
}

/// `n` clips with alternating labels.
pub fn synthesize(n: usize, seed: u64) -> Vec<(AudioClip, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            (synthesize_clip(label, &mut rng), label)
        })
        .collect()
}

/// Mel cache of `n` synthetic clips.
pub fn toy_cache(n: usize, seed: u64) -> MelCache {
    let fb = MelFilterbank::standard();
    let mut cache = MelCache::new();
    for (clip, label) in synthesize(n, seed) {
        cache.push(audio_to_mel(&clip, &fb), label as u8);
    }
    cache
}

/// Writes `n` synthetic clips as `<root>/<class>/<index>.wav`.
pub fn write_toy_corpus(root: impl AsRef<Path>, n: usize, seed: u64) -> Result<()> {
    let root = root.as_ref();
    for class in TOY_CLASSES {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
    }
    for (i, (clip, label)) in synthesize(n, seed).into_iter().enumerate() {
        write_wav(root.join(TOY_CLASSES[label]).join(format!("{i:05}.wav")), &clip)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{downsample_mel, scan_dataset};

    #[test]
    fn classes_differ_in_spectral_centroid() {
        let cache = toy_cache(16, 1);
        assert_eq!(cache.len(), 16);
        assert_eq!(cache.class_counts().values().copied().collect::<Vec<_>>(), vec![8, 8]);
        for (mel, &label) in cache.mels.iter().zip(&cache.labels) {
            let g = downsample_mel(mel, 32).unwrap();
            // energy above the floor, per band, weighted by band index
            let mut num = 0.0;
            let mut den = 0.0;
            for b in 0..32 {
                for t in 0..32 {
                    let e = (g[b * 32 + t] + 40.0) as f64;
                    num += e * b as f64;
                    den += e;
                }
            }
            let centroid = num / den;
            if label == 0 {
                assert!(centroid < 12.0, "{centroid}");
            } else {
                assert!(centroid > 16.0, "{centroid}");
            }
        }
    }

    #[test]
    fn corpus_round_trips_through_scan() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_corpus(dir.path(), 6, 2).unwrap();
        let entries = scan_dataset(dir.path(), &TOY_CLASSES).unwrap();
        assert_eq!(entries.iter().filter(|e| e.1 == 0).count(), 3);
        assert_eq!(entries.len(), 6);
    }
}
