use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{downsample_mel, normalize_db, MelCache};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A minibatch of normalized mel-spectrograms, `[n, 1, r, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub resolution: usize,
    pub mels: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Cache index of each sample.
    pub indices: Vec<usize>,
}

/// Draws `batch_size` records uniformly with replacement.
pub fn sample_batch<R: Rng>(cache: &MelCache, batch_size: usize, resolution: usize, rng: &mut R) -> Result<Batch> {
    if cache.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let indices: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..cache.len())).collect();
    let mut data = Vec::with_capacity(batch_size * resolution * resolution);
    for &i in &indices {
        data.extend(downsample_mel(&cache.mels[i], resolution)?.into_iter().map(normalize_db));
    }
    Ok(Batch {
        resolution,
        mels: Tensor::new(&[batch_size, 1, resolution, resolution], data),
        labels: indices.iter().map(|&i| cache.labels[i] as usize).collect(),
        indices,
    })
}

/// [`sample_batch`] driven entirely by `seed`.
pub fn next_batch(cache: &MelCache, batch_size: usize, resolution: usize, seed: u64) -> Result<Batch> {
    sample_batch(cache, batch_size, resolution, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::MelSpectrogram;

    fn cache(labels: &[u8]) -> MelCache {
        let mut c = MelCache::new();
        for (i, &l) in labels.iter().enumerate() {
            c.push(MelSpectrogram::new(vec![-40.0 + i as f32; MelSpectrogram::LEN]).unwrap(), l);
        }
        c
    }

    #[test]
    fn shapes_and_determinism() {
        let c = cache(&[0, 1, 1, 0, 2]);
        let a = next_batch(&c, 32, 16, 9).unwrap();
        assert_eq!(a.mels.shape(), &[32, 1, 16, 16]);
        assert_eq!(a.labels.len(), 32);
        assert_eq!(a, next_batch(&c, 32, 16, 9).unwrap());
        assert_ne!(a.indices, next_batch(&c, 32, 16, 10).unwrap().indices);
        for (k, &i) in a.indices.iter().enumerate() {
            let v = a.mels.data()[k * 256];
            assert_eq!(v, normalize_db(-40.0 + i as f32));
            assert_eq!(a.labels[k], c.labels[i] as usize);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(next_batch(&MelCache::new(), 4, 8, 0), Err(Error::EmptyDataset)));
        assert!(next_batch(&cache(&[0]), 0, 8, 0).is_err());
        assert!(next_batch(&cache(&[0]), 2, 12, 0).is_err());
    }

    #[test]
    fn label_histogram_tracks_class_proportions() {
        let labels: Vec<u8> = (0..20).map(|i| if i < 5 { 0 } else if i < 15 { 1 } else { 2 }).collect();
        let c = cache(&labels);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..100 {
            for l in sample_batch(&c, 1000, 8, &mut rng).unwrap().labels {
                counts[l] += 1;
            }
        }
        for (k, p) in [0.25, 0.5, 0.25].iter().enumerate() {
            let f = counts[k] as f64 / 100_000.0;
            assert!((f - p).abs() < 0.02, "class {k}: {f}");
        }
    }
}
