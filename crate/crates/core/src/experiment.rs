//! Desk-scale end-to-end run on the synthetic two-class corpus: trains a
//! classifier, trains the GAN while tracking FD, then probes conditioning.

use std::path::Path;

use log::info;

use crate::dataset::toy::toy_cache;
use crate::dataset::MelCache;
use crate::error::Result;
use crate::evaluation::{
    holdout_split, train_digit_classifier, ClassifierConfig, ClassifierReport, DigitClassifier, FdEvaluator,
    FeatureSource, GeneratorSource,
};
use crate::training::{run_training, Trainer, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyExperiment {
    pub training: TrainingConfig,
    pub classifier: ClassifierConfig,
    pub clips: usize,
    pub data_seed: u64,
    /// FD is measured at initialization and every this many samples.
    pub fd_every: u64,
    pub fd_samples: usize,
    pub fd_seed: u64,
    /// Conditional samples per class for the final consistency probe.
    pub probe_per_class: usize,
}

impl Default for ToyExperiment {
    fn default() -> Self {
        Self {
            training: TrainingConfig::toy(),
            classifier: ClassifierConfig::toy(),
            clips: 256,
            data_seed: 1,
            fd_every: 10_000,
            fd_samples: 512,
            fd_seed: 7,
            probe_per_class: 100,
        }
    }
}

#[derive(Debug)]
pub struct ToyReport {
    pub classifier: ClassifierReport,
    /// `(samples_seen, fd)` pairs, starting at zero.
    pub fd_trace: Vec<(u64, f64)>,
    /// Fraction of conditionally generated samples the classifier assigns to their class.
    pub consistency: f64,
    pub trainer: Trainer,
}

impl ToyReport {
    pub fn initial_fd(&self) -> f64 {
        self.fd_trace[0].1
    }

    pub fn min_fd(&self) -> f64 {
        self.fd_trace.iter().map(|&(_, f)| f).fold(f64::INFINITY, f64::min)
    }

    /// Relative FD reduction from initialization to the best point.
    pub fn fd_drop(&self) -> f64 {
        1.0 - self.min_fd() / self.initial_fd()
    }
}

/// Share of `per_class` conditional samples per class that `classifier` labels correctly.
pub fn conditional_consistency(
    trainer: &Trainer,
    cache: &MelCache,
    classifier: &DigitClassifier,
    per_class: usize,
    seed: u64,
) -> Result<f64> {
    let src = GeneratorSource::from_trainer(trainer, cache)?;
    let (mels, labels) = src.per_class(trainer.config.num_classes, per_class, seed)?;
    let pred = classifier.predict(&mels)?;
    let hits = pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

impl ToyExperiment {
    pub fn cache(&self) -> MelCache {
        toy_cache(self.clips, self.data_seed)
    }

    /// Runs everything, writing checkpoints and metrics under `dir`.
    pub fn run(&self, dir: impl AsRef<Path>) -> Result<ToyReport> {
        let cache = self.cache();
        let (_, held) = holdout_split(&cache, 0.2, self.data_seed);
        let (classifier, report) = train_digit_classifier(&cache, &held, self.classifier)?;
        info!("classifier held-out accuracy {:.3}", report.accuracy());
        let eval = FdEvaluator::new(&cache, FeatureSource::Classifier(&classifier))?;
        let fd_of = |t: &Trainer| -> Result<f64> {
            eval.evaluate(&GeneratorSource::from_trainer(t, &cache)?, self.fd_samples, self.fd_seed)
        };
        let initial = Trainer::new(self.training.clone())?;
        let mut fd_trace = vec![(0, fd_of(&initial)?)];
        info!("fd at initialization {:.4}", fd_trace[0].1);
        drop(initial);
        let trainer = run_training(&self.training, &cache, dir, false, |t, _| {
            let s = t.progress.samples_seen;
            let prev = fd_trace.last().map_or(0, |&(p, _)| p);
            if s / self.fd_every != prev / self.fd_every || t.is_finished() {
                let fd = fd_of(t)?;
                info!("fd at {s} samples: {fd:.4}");
                fd_trace.push((s, fd));
            }
            Ok(())
        })?;
        let consistency = conditional_consistency(&trainer, &cache, &classifier, self.probe_per_class, self.fd_seed)?;
        Ok(ToyReport {
            classifier: report,
            fd_trace,
            consistency,
            trainer,
        })
    }
}
