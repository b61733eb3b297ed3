//! Digit-utterance ingestion, the on-disk mel cache and minibatch sampling.

mod cache;
mod pyramid;
mod sampler;
pub mod toy;

pub use cache::{preprocess_cache, MelCache, PreprocessReport, CACHE_MAGIC, CACHE_VERSION};
pub use pyramid::{
    denormalize_db, downsample, downsample_mel, network_output_to_mel, normalize_db, resize_batch, upsample,
    ResolutionPyramid, RESOLUTIONS,
};
pub use sampler::{next_batch, sample_batch, Batch};

use std::path::{Path, PathBuf};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};

/// Directory names of the ten digit words, indexed by label.
pub const DIGIT_CLASSES: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// A cached mel-spectrogram with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub mel: MelSpectrogram,
    pub label: usize,
    pub source_path: String,
}

/// Lists `<root>/<class>/*.wav`, labelled by the position of `<class>` in
/// `class_names`, ordered by label and then by file name bytes.
pub fn scan_dataset<S: AsRef<str>>(root: impl AsRef<Path>, class_names: &[S]) -> Result<Vec<(PathBuf, usize)>> {
    let root = root.as_ref();
    let missing: Vec<String> = class_names
        .iter()
        .map(|c| c.as_ref())
        .filter(|c| !root.join(c).is_dir())
        .map(str::to_owned)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let mut out = Vec::new();
    for (label, class) in class_names.iter().enumerate() {
        let dir = root.join(class.as_ref());
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io_at(&dir, e))? {
            let path = entry.map_err(|e| Error::io_at(&dir, e))?.path();
            let is_wav = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if is_wav && path.is_file() {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        out.extend(files.into_iter().map(|p| (p, label)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_labels_and_orders_files() {
        let dir = tempfile::tempdir().unwrap();
        for c in DIGIT_CLASSES {
            std::fs::create_dir(dir.path().join(c)).unwrap();
        }
        std::fs::create_dir(dir.path().join("bed")).unwrap();
        std::fs::write(dir.path().join("bed/x.wav"), b"").unwrap();
        for f in ["c.wav", "a.wav", "b.WAV", "notes.txt"] {
            std::fs::write(dir.path().join("zero").join(f), b"").unwrap();
        }
        std::fs::write(dir.path().join("nine/z.wav"), b"").unwrap();
        let entries = scan_dataset(dir.path(), &DIGIT_CLASSES).unwrap();
        let names: Vec<(String, usize)> = entries
            .iter()
            .map(|(p, l)| (p.file_name().unwrap().to_string_lossy().into_owned(), *l))
            .collect();
        assert_eq!(
            names,
            vec![
                ("a.wav".into(), 0),
                ("b.WAV".into(), 0),
                ("c.wav".into(), 0),
                ("z.wav".into(), 9)
            ]
        );
    }

    #[test]
    fn missing_classes_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("one")).unwrap();
        match scan_dataset(dir.path(), &DIGIT_CLASSES) {
            Err(Error::MissingClasses(m)) => {
                assert_eq!(m.len(), 9);
                assert!(!m.contains(&"one".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }
}
