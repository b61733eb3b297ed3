use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;

use super::LabeledExample;
use crate::dsp::{audio_to_mel, read_wav, MelFilterbank, MelSpectrogram};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: [u8; 4] = *b"MELC";
pub const CACHE_VERSION: u32 = 1;

const HEADER_BYTES: usize = 12;
const RECORD_BYTES: usize = 1 + MelSpectrogram::LEN * 4;

/// Preprocessed mel-spectrograms (dB) with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MelCache {
    pub labels: Vec<u8>,
    pub mels: Vec<MelSpectrogram>,
}

impl MelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mel: MelSpectrogram, label: u8) {
        self.labels.push(label);
        self.mels.push(mel);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample {
            mel: self.mels[i].clone(),
            label: self.labels[i] as usize,
            source_path: format!("cache#{i}"),
        }
    }

    /// Number of records per label.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l as usize).or_insert(0) += 1;
        }
        counts
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Indices of the records carrying `label`.
    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] as usize == label).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.len() * RECORD_BYTES);
        out.extend_from_slice(&CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (label, mel) in self.labels.iter().zip(&self.mels) {
            out.push(*label);
            for v in mel.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES || bytes[..4] != CACHE_MAGIC {
            return Err(Error::CacheFormat("missing MELC header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != CACHE_VERSION {
            return Err(Error::CacheFormat(format!("unsupported version {version}")));
        }
        let count = word(8) as usize;
        let expected = HEADER_BYTES + count * RECORD_BYTES;
        if bytes.len() != expected {
            return Err(Error::CacheFormat(format!(
                "header declares {count} records ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let mut cache = MelCache::new();
        for rec in bytes[HEADER_BYTES..].chunks_exact(RECORD_BYTES) {
            let values = rec[1..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let mel = MelSpectrogram::new(values)
                .map_err(|e| Error::CacheFormat(format!("record {}: {e}", cache.len())))?;
            cache.push(mel, rec[0]);
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io_at(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io_at(path, e))?)
    }
}

/// Outcome of [`preprocess_cache`].
#[derive(Debug, Clone, Default)]
pub struct PreprocessReport {
    pub written: usize,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Converts every readable clip to a mel-spectrogram and writes the cache.
/// Files that fail to decode are skipped with a warning.
pub fn preprocess_cache(entries: &[(PathBuf, usize)], cache_path: impl AsRef<Path>) -> Result<PreprocessReport> {
    let fb = MelFilterbank::standard();
    let mut cache = MelCache::new();
    let mut report = PreprocessReport::default();
    for (path, label) in entries {
        let label = u8::try_from(*label)
            .map_err(|_| Error::InvalidArgument(format!("label {label} does not fit in a byte")))?;
        match read_wav(path) {
            Ok(clip) => cache.push(audio_to_mel(&clip, &fb), label),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                report.skipped.push((path.clone(), e.to_string()));
            }
        }
    }
    cache.save(cache_path)?;
    report.written = cache.len();
    if !report.skipped.is_empty() {
        warn!(
            "wrote {} records, skipped {} undecodable files",
            report.written,
            report.skipped.len()
        );
    }
    Ok(report)
}
