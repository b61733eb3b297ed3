//! End-to-end scoring: Fréchet distance between real and generated feature
//! statistics, and character error rate of transcribed generated audio.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adapters::{EmbeddingProvider, Transcriber};
use super::cer::cer;
use super::classifier::{records_tensor, DigitClassifier};
use super::fd::{activation_stats, frechet_distance, ActivationStats};
use crate::autodiff::Tensor;
use crate::dataset::{network_output_to_mel, sample_batch, MelCache};
use crate::dsp::{audio_to_mel, read_wav, write_wav, MelFilterbank, MelInverter, MelSpectrogram};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::training::Trainer;

/// Generated-side sample count when none is given.
pub const DEFAULT_FD_SAMPLES: usize = 5000;
const GEN_CHUNK: usize = 64;
const REAL_CHUNK: usize = 256;

/// Anything that yields normalized `[n, 1, r, r]` spectrograms with labels.
pub trait MelSource {
    fn sample(&self, n: usize, seed: u64) -> Result<(Tensor<f32>, Vec<usize>)>;
}

/// Draws from a generator at a fixed stage, with labels drawn from `label_pool`.
pub struct GeneratorSource<'a> {
    pub generator: &'a Generator<f32>,
    pub resolution: usize,
    pub alpha: f64,
    pub label_pool: Vec<usize>,
}

impl<'a> GeneratorSource<'a> {
    /// Samples at the trainer's current stage with the dataset's label distribution.
    pub fn from_trainer(trainer: &'a Trainer, cache: &MelCache) -> Result<Self> {
        let st = trainer.sampling_stage()?;
        Ok(Self {
            generator: &trainer.generator,
            resolution: st.resolution,
            alpha: st.alpha,
            label_pool: cache.labels.iter().map(|&l| l as usize).collect(),
        })
    }

    /// Generates for explicit labels.
    pub fn generate(&self, labels: &[usize], seed: u64) -> Result<Tensor<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut parts = Vec::new();
        for chunk in labels.chunks(GEN_CHUNK) {
            let z = self.generator.sample_latents(chunk.len(), &mut rng);
            let noise = self.generator.sample_noise(chunk.len(), self.resolution, &mut rng);
            parts.push(self.generator.generate(&z, chunk, &noise, self.resolution, self.alpha)?);
        }
        concat_rows(&parts, self.resolution)
    }

    /// `per_class` samples conditioned on each class in turn.
    pub fn per_class(&self, classes: usize, per_class: usize, seed: u64) -> Result<(Tensor<f32>, Vec<usize>)> {
        let labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
        Ok((self.generate(&labels, seed)?, labels))
    }
}

impl MelSource for GeneratorSource<'_> {
    fn sample(&self, n: usize, seed: u64) -> Result<(Tensor<f32>, Vec<usize>)> {
        if self.label_pool.is_empty() {
            return Err(Error::InvalidArgument("no labels to condition on".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n)
            .map(|_| self.label_pool[rng.gen_range(0..self.label_pool.len())])
            .collect();
        Ok((self.generate(&labels, rng.gen())?, labels))
    }
}

/// Real records drawn uniformly with replacement; stands in for a perfect generator.
pub struct CacheSource<'a> {
    pub cache: &'a MelCache,
    pub resolution: usize,
}

impl MelSource for CacheSource<'_> {
    fn sample(&self, n: usize, seed: u64) -> Result<(Tensor<f32>, Vec<usize>)> {
        let b = sample_batch(self.cache, n, self.resolution, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok((b.mels, b.labels))
    }
}

fn concat_rows(parts: &[Tensor<f32>], r: usize) -> Result<Tensor<f32>> {
    let n: usize = parts.iter().map(|t| t.shape()[0]).sum();
    let mut data = Vec::with_capacity(n * r * r);
    for t in parts {
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new(&[n, 1, r, r], data))
}

/// Renders each normalized row of `mels` as a 128x128 dB spectrogram.
pub fn rows_to_mels(mels: &Tensor<f32>) -> Result<Vec<MelSpectrogram>> {
    let s = mels.shape();
    if s.len() != 4 || s[1] != 1 || s[2] != s[3] {
        return Err(Error::Shape(format!("expected [n, 1, r, r], got {s:?}")));
    }
    let r = s[2];
    mels.data().chunks(r * r).map(|row| network_output_to_mel(row, r)).collect()
}

/// Where FD activations come from.
pub enum FeatureSource<'a> {
    Classifier(&'a DigitClassifier),
    /// Speaker embeddings of Griffin-Lim audio, written as WAVs under `work_dir`.
    Embedding {
        provider: &'a dyn EmbeddingProvider,
        work_dir: PathBuf,
        griffin_lim_iters: usize,
    },
}

impl FeatureSource<'_> {
    pub fn features(&self, mels: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        match self {
            FeatureSource::Classifier(c) => c.activations(mels),
            FeatureSource::Embedding { .. } => self.embed_mels(&rows_to_mels(mels)?, "gen"),
        }
    }

    fn embed_mels(&self, mels: &[MelSpectrogram], prefix: &str) -> Result<Vec<Vec<f64>>> {
        let FeatureSource::Embedding {
            provider,
            work_dir,
            griffin_lim_iters,
        } = self
        else {
            unreachable!("embedding path on a classifier source")
        };
        std::fs::create_dir_all(work_dir).map_err(|e| Error::io_at(work_dir, e))?;
        let inverter = MelInverter::new(&MelFilterbank::standard());
        let mut dim = None;
        mels.iter()
            .enumerate()
            .map(|(i, mel)| {
                let path = work_dir.join(format!("{prefix}-{i:06}.wav"));
                write_wav(&path, &inverter.invert(mel, *griffin_lim_iters)?)?;
                let v = provider.embed(&path)?;
                if *dim.get_or_insert(v.len()) != v.len() {
                    return Err(Error::EmbeddingProvider(format!(
                        "embedding width changed from {} to {}",
                        dim.unwrap(),
                        v.len()
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    /// Activation statistics over every record of the cache.
    pub fn real_stats(&self, cache: &MelCache) -> Result<ActivationStats> {
        let mut rows = Vec::with_capacity(cache.len());
        match self {
            FeatureSource::Classifier(c) => {
                let all: Vec<usize> = (0..cache.len()).collect();
                for chunk in all.chunks(REAL_CHUNK) {
                    rows.extend(c.activations(&records_tensor(cache, chunk, c.config.resolution)?)?);
                }
            }
            FeatureSource::Embedding { .. } => rows = self.embed_mels(&cache.mels, "real")?,
        }
        activation_stats(&rows)
    }
}

/// Scores generators against fixed real-data statistics.
pub struct FdEvaluator<'a> {
    pub features: FeatureSource<'a>,
    pub real: ActivationStats,
}

impl<'a> FdEvaluator<'a> {
    pub fn new(cache: &MelCache, features: FeatureSource<'a>) -> Result<Self> {
        let real = features.real_stats(cache)?;
        Ok(Self { features, real })
    }

    /// FD between the real statistics and `n` samples from `source`.
    pub fn evaluate(&self, source: &dyn MelSource, n: usize, seed: u64) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 generated samples, got {n}")));
        }
        let mut rows = Vec::with_capacity(n);
        let mut done = 0;
        let mut chunk_seed = ChaCha8Rng::seed_from_u64(seed);
        while done < n {
            let len = REAL_CHUNK.min(n - done);
            let (mels, _) = source.sample(len, chunk_seed.gen())?;
            rows.extend(self.features.features(&mels)?);
            done += len;
        }
        frechet_distance(&self.real, &activation_stats(&rows)?)
    }
}

/// One-shot FD of `source` against every record of `cache`.
pub fn evaluate_fd(
    source: &dyn MelSource,
    cache: &MelCache,
    features: FeatureSource<'_>,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    FdEvaluator::new(cache, features)?.evaluate(source, n_samples, seed)
}

/// Transcription outcome of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CerRecord {
    pub index: usize,
    /// Label the sample was generated for, when known.
    pub conditioning: Option<usize>,
    /// Classifier prediction, which decides the reference word.
    pub pseudo_label: usize,
    pub reference: String,
    /// `None` when the transcriber failed.
    pub hypothesis: Option<String>,
    pub cer: Option<f64>,
    pub audio: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub label: usize,
    pub name: String,
    pub scored: usize,
    pub missing: usize,
    pub mean: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CerReport {
    pub class_names: Vec<String>,
    pub records: Vec<CerRecord>,
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(label: usize, name: &str, records: &[&CerRecord]) -> ClassSummary {
    let mut v: Vec<f64> = records.iter().filter_map(|r| r.cer).collect();
    v.sort_by(f64::total_cmp);
    let mean = if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    };
    ClassSummary {
        label,
        name: name.to_string(),
        scored: v.len(),
        missing: records.len() - v.len(),
        mean,
        p25: percentile(&v, 0.25),
        median: percentile(&v, 0.5),
        p75: percentile(&v, 0.75),
    }
}

impl CerReport {
    pub fn missing(&self) -> usize {
        self.records.iter().filter(|r| r.cer.is_none()).count()
    }

    pub fn total(&self) -> ClassSummary {
        summarize(usize::MAX, "total", &self.records.iter().collect::<Vec<_>>())
    }

    /// Distribution per pseudo-label, in class order.
    pub fn per_class(&self) -> Vec<ClassSummary> {
        (0..self.class_names.len())
            .map(|c| {
                let recs: Vec<&CerRecord> = self.records.iter().filter(|r| r.pseudo_label == c).collect();
                summarize(c, &self.class_names[c], &recs)
            })
            .collect()
    }

    /// Fraction of samples whose pseudo-label matches their conditioning label.
    pub fn label_agreement(&self) -> Option<f64> {
        let known: Vec<&CerRecord> = self.records.iter().filter(|r| r.conditioning.is_some()).collect();
        if known.is_empty() {
            return None;
        }
        let hits = known.iter().filter(|r| r.conditioning == Some(r.pseudo_label)).count();
        Some(hits as f64 / known.len() as f64)
    }

    /// Tab-separated per-sample records followed by a summary block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("index\tconditioning\tpseudo_label\treference\thypothesis\tcer\taudio\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.index,
                r.conditioning.map_or("-".to_string(), |c| c.to_string()),
                r.pseudo_label,
                r.reference,
                r.hypothesis.as_deref().unwrap_or("<missing>"),
                r.cer.map_or("-".to_string(), |c| format!("{c:.6}")),
                r.audio.display()
            );
        }
        out.push_str("\n# summary\nclass\tscored\tmissing\tmean\tp25\tmedian\tp75\n");
        for s in self.per_class().into_iter().chain([self.total()]) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                s.name, s.scored, s.missing, s.mean, s.p25, s.median, s.p75
            );
        }
        out
    }
}

fn normalize_transcript(text: &str) -> String {
    text.trim().to_lowercase()
}

fn score_one(
    transcriber: &dyn Transcriber,
    class_names: &[String],
    index: usize,
    conditioning: Option<usize>,
    pseudo_label: usize,
    audio: PathBuf,
) -> Result<CerRecord> {
    let reference = class_names
        .get(pseudo_label)
        .ok_or_else(|| Error::InvalidArgument(format!("no class name for label {pseudo_label}")))?
        .clone();
    let hypothesis = match transcriber.transcribe(&audio) {
        Ok(t) => Some(normalize_transcript(&t)),
        Err(e) => {
            log::warn!("transcription of {} failed: {e}", audio.display());
            None
        }
    };
    let cer = hypothesis.as_deref().map(|h| cer(&reference, h)).transpose()?;
    Ok(CerRecord {
        index,
        conditioning,
        pseudo_label,
        reference,
        hypothesis,
        cer,
        audio,
    })
}

/// Inverts generated spectrograms to WAVs under `work_dir`, pseudo-labels them
/// with `classifier` and scores the transcripts against the predicted class names.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_cer(
    mels: &Tensor<f32>,
    conditioning: Option<&[usize]>,
    classifier: &DigitClassifier,
    transcriber: &dyn Transcriber,
    class_names: &[String],
    work_dir: &Path,
    griffin_lim_iters: usize,
) -> Result<CerReport> {
    let n = mels.shape().first().copied().unwrap_or(0);
    if let Some(c) = conditioning {
        if c.len() != n {
            return Err(Error::Shape(format!("{} conditioning labels for {n} samples", c.len())));
        }
    }
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io_at(work_dir, e))?;
    let pseudo = classifier.predict(mels)?;
    let inverter = MelInverter::new(&MelFilterbank::standard());
    let mut records = Vec::with_capacity(n);
    for (i, mel) in rows_to_mels(mels)?.iter().enumerate() {
        let audio = work_dir.join(format!("sample-{i:06}.wav"));
        write_wav(&audio, &inverter.invert(mel, griffin_lim_iters)?)?;
        records.push(score_one(
            transcriber,
            class_names,
            i,
            conditioning.map(|c| c[i]),
            pseudo[i],
            audio,
        )?);
    }
    Ok(CerReport {
        class_names: class_names.to_vec(),
        records,
    })
}

/// Scores existing WAV files: each is converted to a mel-spectrogram for the
/// pseudo-label and passed unchanged to the transcriber.
pub fn evaluate_cer_audio(
    wavs: &[PathBuf],
    classifier: &DigitClassifier,
    transcriber: &dyn Transcriber,
    class_names: &[String],
) -> Result<CerReport> {
    let fb = MelFilterbank::standard();
    let mut cache = MelCache::new();
    for w in wavs {
        cache.push(audio_to_mel(&read_wav(w)?, &fb), 0);
    }
    let all: Vec<usize> = (0..cache.len()).collect();
    let pseudo = classifier.predict_records(&cache, &all)?;
    let records = wavs
        .iter()
        .enumerate()
        .map(|(i, w)| score_one(transcriber, class_names, i, None, pseudo[i], w.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CerReport {
        class_names: class_names.to_vec(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy::toy_cache;
    use crate::evaluation::classifier::{holdout_split, train_digit_classifier, ClassifierConfig};
    use crate::generator::GeneratorConfig;

    fn names() -> Vec<String> {
        vec!["low".into(), "high".into()]
    }

    fn tiny_generator() -> Generator<f32> {
        Generator::new(
            GeneratorConfig {
                num_classes: 2,
                latent_dim: 8,
                w_dim: 8,
                embed_dim: 4,
                mapping_layers: 2,
                channels: 4,
                max_resolution: 16,
            },
            3,
        )
        .unwrap()
    }

    fn classifier(cache: &MelCache) -> DigitClassifier {
        let cfg = ClassifierConfig {
            resolution: 16,
            channels: 8,
            train_samples: 1_600,
            ..ClassifierConfig::toy()
        };
        let (_, held) = holdout_split(cache, 0.2, 1);
        train_digit_classifier(cache, &held, cfg).unwrap().0
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!(percentile(&[], 0.5).is_nan());
    }

    #[test]
    fn generator_source_is_deterministic() {
        let g = tiny_generator();
        let src = GeneratorSource {
            generator: &g,
            resolution: 16,
            alpha: 0.5,
            label_pool: vec![0, 1, 1],
        };
        let (a, la) = src.sample(70, 4).unwrap();
        let (b, lb) = src.sample(70, 4).unwrap();
        assert_eq!(a.shape(), &[70, 1, 16, 16]);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_ne!(a, src.sample(70, 5).unwrap().0);
        let (_, labels) = src.per_class(2, 3, 1).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn real_sampler_scores_near_zero_and_generator_does_not() {
        let cache = toy_cache(64, 5);
        let clf = classifier(&cache);
        let eval = FdEvaluator::new(&cache, FeatureSource::Classifier(&clf)).unwrap();
        let real = CacheSource {
            cache: &cache,
            resolution: 16,
        };
        let fd_real = eval.evaluate(&real, 2000, 1).unwrap();
        assert_eq!(fd_real, eval.evaluate(&real, 2000, 1).unwrap());
        let g = tiny_generator();
        let fake = GeneratorSource {
            generator: &g,
            resolution: 16,
            alpha: 1.0,
            label_pool: vec![0, 1],
        };
        let fd_fake = eval.evaluate(&fake, 200, 1).unwrap();
        assert!(fd_real < 0.5, "{fd_real}");
        assert!(fd_fake > 10.0 * fd_real, "{fd_fake} vs {fd_real}");
        assert!(eval.evaluate(&real, 1, 1).is_err());
    }

    #[test]
    fn cer_with_stub_transcribers() {
        let cache = toy_cache(32, 6);
        let clf = classifier(&cache);
        let dir = tempfile::tempdir().unwrap();
        let idx: Vec<usize> = (0..6).collect();
        let mels = records_tensor(&cache, &idx, 16).unwrap();
        let labels: Vec<usize> = idx.iter().map(|&i| cache.labels[i] as usize).collect();
        let pseudo = clf.predict(&mels).unwrap();
        let ns = names();
        let truth = |p: &Path| -> Result<String> {
            let i: usize = p.file_stem().unwrap().to_str().unwrap()[7..].parse().unwrap();
            Ok(format!(" {}\n", ns[pseudo[i]].to_uppercase()))
        };
        let r = evaluate_cer(&mels, Some(&labels), &clf, &truth, &ns, dir.path(), 4).unwrap();
        assert_eq!(r.records.len(), 6);
        assert_eq!(r.total().mean, 0.0);
        assert_eq!(r.missing(), 0);
        assert!(r.records.iter().all(|x| x.audio.exists()));
        assert!(r.label_agreement().unwrap() > 0.5);
        let empty = |_: &Path| -> Result<String> { Ok(String::new()) };
        let r = evaluate_cer(&mels, None, &clf, &empty, &ns, dir.path(), 4).unwrap();
        assert!(r.records.iter().all(|x| x.cer == Some(1.0)));
        assert_eq!(r.label_agreement(), None);
        let failing = |_: &Path| -> Result<String> { Err(Error::Transcriber("offline".into())) };
        let r = evaluate_cer(&mels, None, &clf, &failing, &ns, dir.path(), 4).unwrap();
        assert_eq!(r.missing(), 6);
        assert_eq!(r.total().scored, 0);
        let tsv = r.to_tsv();
        assert!(tsv.contains("<missing>") && tsv.contains("# summary"));
        assert_eq!(tsv.lines().filter(|l| l.starts_with("total\t0\t6")).count(), 1);
    }
}
