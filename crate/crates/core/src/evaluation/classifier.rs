//! Small convolutional digit classifier. Its pooled features feed the
//! Fréchet distance and its predictions pseudo-label generated samples.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tensor, Var};
use crate::dataset::{downsample_mel, normalize_db, resize_batch, MelCache};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Conv, Dense, ParamGroup, ParamStore, LEAKY_SLOPE, RELU_GAIN};
use crate::training::{Reader, Writer};

pub const CLASSIFIER_MAGIC: [u8; 4] = *b"SMCL";
const CLASSIFIER_VERSION: u32 = 1;
const CONV_BLOCKS: usize = 4;
/// Rows per forward pass when extracting features.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub num_classes: usize,
    /// Side length of the square input; mels are resized to it.
    pub resolution: usize,
    pub channels: usize,
    /// Total training examples presented.
    pub train_samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ClassifierConfig {
    pub fn full() -> Self {
        Self {
            num_classes: 10,
            resolution: 128,
            channels: 64,
            train_samples: 150_000,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }

    /// Desk-scale settings for the two-class toy corpus.
    pub fn toy() -> Self {
        Self {
            num_classes: 2,
            resolution: 32,
            channels: 16,
            train_samples: 6_000,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a classifier needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.resolution < 16 || !self.resolution.is_power_of_two() || self.resolution > 128 {
            return Err(Error::InvalidArgument(format!(
                "classifier resolution {} must be a power of two in 16..=128",
                self.resolution
            )));
        }
        if self.channels == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid classifier config {self:?}")));
        }
        Ok(())
    }
}

/// Accuracy on the examples excluded from training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierReport {
    pub held_out: usize,
    pub correct: usize,
    pub final_loss: f64,
}

impl ClassifierReport {
    pub fn accuracy(&self) -> f64 {
        if self.held_out == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.held_out as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct DigitClassifier {
    pub config: ClassifierConfig,
    pub params: ParamStore<f32>,
    convs: Vec<Conv>,
    head: Dense,
}

impl DigitClassifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let c = config.channels;
        let convs = (0..CONV_BLOCKS)
            .map(|i| {
                let cin = if i == 0 { 2 } else { c };
                Conv::new(&mut params, &format!("c.conv{i}"), cin, c, 3, RELU_GAIN, &mut rng)
            })
            .collect();
        let head = Dense::new(&mut params, "c.head", c, config.num_classes, 1.0, ParamGroup::Main, &mut rng);
        Ok(Self {
            config,
            params,
            convs,
            head,
        })
    }

    /// Width of the pooled feature vector.
    pub fn feature_dim(&self) -> usize {
        self.config.channels
    }

    /// Pooled features `[n, c]` and logits `[n, k]` for inputs at the classifier resolution.
    /// A fixed band-position ramp rides along as a second input channel, since
    /// global pooling alone would discard where energy sits in frequency.
    fn forward(&self, p: &crate::nn::Bound<f32>, x: &Var<f32>) -> (Var<f32>, Var<f32>) {
        let (n, r) = (x.shape()[0], self.config.resolution);
        let ramp: Vec<f32> = (0..r * r).map(|i| 2.0 * (i / r) as f32 / (r - 1) as f32 - 1.0).collect();
        let coord = Var::constant(Tensor::new(&[1, 1, r, r], ramp)).broadcast_to(&[n, 1, r, r]);
        let mut h = Var::concat(&[x.clone(), coord], 1);
        for conv in &self.convs {
            h = conv.forward_strided(p, &h, 2).leaky_relu(LEAKY_SLOPE);
        }
        let features = h.mean_axes(&[2, 3]).reshape(&[x.shape()[0], self.config.channels]);
        let logits = self.head.forward(p, &features);
        (features, logits)
    }

    fn run(&self, mels: &Tensor<f32>) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let x = resize_batch(mels, self.config.resolution)?;
        let n = x.shape()[0];
        let r = self.config.resolution;
        let p = self.params.bind(false);
        let (mut feats, mut logits) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for start in (0..n).step_by(EVAL_CHUNK) {
            let len = EVAL_CHUNK.min(n - start);
            let chunk = Tensor::new(&[len, 1, r, r], x.data()[start * r * r..(start + len) * r * r].to_vec());
            let (f, l) = self.forward(&p, &Var::constant(chunk));
            let rows = |v: &Var<f32>| -> Vec<Vec<f64>> {
                let k = v.shape()[1];
                v.value().to_f64_vec().chunks(k).map(<[f64]>::to_vec).collect()
            };
            feats.extend(rows(&f));
            logits.extend(rows(&l));
        }
        Ok((feats, logits))
    }

    /// Pooled pre-softmax features, one row per normalized `[n, 1, r, r]` input.
    pub fn activations(&self, mels: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(mels)?.0)
    }

    pub fn logits(&self, mels: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(mels)?.1)
    }

    /// Most likely class of each input.
    pub fn predict(&self, mels: &Tensor<f32>) -> Result<Vec<usize>> {
        Ok(self.logits(mels)?.iter().map(|l| argmax(l)).collect())
    }

    /// Classifies cache records by index.
    pub fn predict_records(&self, cache: &MelCache, indices: &[usize]) -> Result<Vec<usize>> {
        self.predict(&records_tensor(cache, indices, self.config.resolution)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(CLASSIFIER_MAGIC.to_vec());
        w.u32(CLASSIFIER_VERSION);
        let c = &self.config;
        for v in [c.num_classes, c.resolution, c.channels, c.train_samples, c.batch_size] {
            w.u64(v as u64);
        }
        w.u64(c.learning_rate.to_bits());
        w.u64(c.seed);
        w.store(&self.params);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("classifier file: {m}"));
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CLASSIFIER_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CLASSIFIER_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let config = ClassifierConfig {
            num_classes: dims[0],
            resolution: dims[1],
            channels: dims[2],
            train_samples: dims[3],
            batch_size: dims[4],
            learning_rate: f64::from_bits(r.u64()?),
            seed: r.u64()?,
        };
        let mut model = Self::new(config)?;
        let stored = r.store()?;
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if stored.len() != model.params.len() {
            return Err(bad("parameter count mismatch".into()));
        }
        for (t, s) in model.params.params_mut().iter_mut().zip(stored.params()) {
            if t.name != s.name || t.value.shape() != s.value.shape() {
                return Err(bad(format!("unexpected parameter {}", s.name)));
            }
            t.value = s.value.clone();
        }
        Ok(model)
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

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalized `[n, 1, r, r]` tensor of cache records.
pub fn records_tensor(cache: &MelCache, indices: &[usize], resolution: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(indices.len() * resolution * resolution);
    for &i in indices {
        let mel = cache
            .mels
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("record {i} outside cache of {}", cache.len())))?;
        data.extend(downsample_mel(mel, resolution)?.into_iter().map(normalize_db));
    }
    Ok(Tensor::new(&[indices.len(), 1, resolution, resolution], data))
}

/// Splits record indices into (train, held-out), stratified by class.
pub fn holdout_split(cache: &MelCache, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for label in 0..cache.num_classes() {
        let mut idx = cache.indices_of(label);
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64) * fraction).round() as usize;
        held.extend_from_slice(&idx[..k.min(idx.len())]);
        train.extend_from_slice(&idx[k.min(idx.len())..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Trains on every record not listed in `held_out` with softmax cross-entropy
/// and reports accuracy on the held-out records.
pub fn train_digit_classifier(
    cache: &MelCache,
    held_out: &[usize],
    config: ClassifierConfig,
) -> Result<(DigitClassifier, ClassifierReport)> {
    config.validate()?;
    let classes = cache.num_classes();
    if cache.class_counts().len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training data covers {} class(es); at least 2 are needed",
            cache.class_counts().len()
        )));
    }
    if classes > config.num_classes {
        return Err(Error::InvalidArgument(format!(
            "cache has labels up to {} but the classifier has {} outputs",
            classes - 1,
            config.num_classes
        )));
    }
    let excluded: std::collections::BTreeSet<usize> = held_out.iter().copied().collect();
    let train: Vec<usize> = (0..cache.len()).filter(|i| !excluded.contains(i)).collect();
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = DigitClassifier::new(config)?;
    let mut opt = Adam::new(
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mapping_lr_factor: 1.0,
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let steps = config.train_samples.div_ceil(config.batch_size);
    let mut final_loss = f64::NAN;
    for _ in 0..steps {
        let idx: Vec<usize> = (0..config.batch_size).map(|_| train[rng.gen_range(0..train.len())]).collect();
        let x = records_tensor(cache, &idx, config.resolution)?;
        let mut onehot = vec![0f32; idx.len() * config.num_classes];
        for (row, &i) in idx.iter().enumerate() {
            onehot[row * config.num_classes + cache.labels[i] as usize] = 1.0;
        }
        let target = Var::constant(Tensor::new(&[idx.len(), config.num_classes], onehot));
        let p = model.params.bind(true);
        let (_, logits) = model.forward(&p, &Var::constant(x));
        let loss = logits.log_softmax().mul(&target).sum_all().scale(-1.0 / idx.len() as f64);
        final_loss = loss.value().item() as f64;
        if !final_loss.is_finite() {
            return Err(Error::Numerical(format!("classifier loss became {final_loss}")));
        }
        let grads = p.grads(&loss);
        opt.step(&mut model.params, &grads, config.learning_rate);
    }
    let mut correct = 0;
    if !held_out.is_empty() {
        let pred = model.predict_records(cache, held_out)?;
        correct = pred.iter().zip(held_out).filter(|(&p, &i)| p == cache.labels[i] as usize).count();
    }
    Ok((
        model,
        ClassifierReport {
            held_out: held_out.len(),
            correct,
            final_loss,
        },
    ))
}
