use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{restore, Checkpoint, Progress};
use super::config::TrainingConfig;
use super::losses::{discriminator_loss, generator_loss, gradient_penalty};
use super::schedule::{schedule_state, StageState};
use crate::autodiff::{Tensor, Var};
use crate::dataset::{sample_batch, MelCache};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{mix_styles_per_sample, Generator};
use crate::nn::{Adam, Bound};

pub const METRICS_HEADER: &str = "samples_seen\tresolution\talpha\td_loss\tg_loss\tgp";

/// Losses and stage of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Samples seen when the step started.
    pub samples_seen: u64,
    pub resolution: usize,
    pub alpha: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub gp: f64,
    /// `mean(real scores) - mean(fake scores)` before the update.
    pub wasserstein: f64,
}

impl StepMetrics {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.samples_seen, self.resolution, self.alpha, self.d_loss, self.g_loss, self.gp
        )
    }
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.gen()
}

/// The random stream of step `step`, independent of every other step.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    rng.set_stream(step);
    rng
}

/// Networks, optimizers and progress of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainingConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub g_opt: Adam<f32>,
    pub d_opt: Adam<f32>,
    pub progress: Progress,
}

impl Trainer {
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator_config(), derive_seed(config.seed, 1))?;
        let discriminator = Discriminator::new(config.discriminator_config(), derive_seed(config.seed, 2))?;
        let g_opt = Adam::new(config.adam(), &generator.params);
        let d_opt = Adam::new(config.adam(), &discriminator.params);
        Ok(Self {
            config,
            generator,
            discriminator,
            g_opt,
            d_opt,
            progress: Progress::default(),
        })
    }

    /// Rebuilds a trainer from a checkpoint, refusing it if `runtime` differs
    /// from the configuration it was written under.
    pub fn from_checkpoint(ckpt: &Checkpoint, runtime: &TrainingConfig) -> Result<Self> {
        ckpt.check_config(runtime)?;
        let mut t = Self::new(runtime.clone())?;
        restore(&mut t.generator.params, &mut t.g_opt, &ckpt.generator, &ckpt.g_moments)?;
        restore(&mut t.discriminator.params, &mut t.d_opt, &ckpt.discriminator, &ckpt.d_moments)?;
        t.progress = ckpt.progress;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            config_hash: self.config.hash(),
            progress: self.progress,
            generator: self.generator.params.clone(),
            discriminator: self.discriminator.params.clone(),
            g_moments: self.g_opt.state.clone(),
            d_moments: self.d_opt.state.clone(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.progress.samples_seen >= self.config.total_samples
    }

    pub fn stage(&self) -> Result<StageState> {
        schedule_state(self.progress.samples_seen, &self.config)
    }

    /// Generator output for `labels` with fresh latents, mixing and noise.
    fn fake<R: Rng>(&self, p: &Bound<f32>, labels: &[usize], st: &StageState, rng: &mut R) -> Result<Var<f32>> {
        let g = &self.generator;
        let n = labels.len();
        let active = g.active_blocks(st.resolution);
        let w1 = g.map(p, &g.sample_latents(n, rng), labels)?;
        let z2 = g.sample_latents(n, rng);
        let crossovers: Vec<usize> = (0..n)
            .map(|_| {
                let mix = rng.gen::<f64>() < self.config.style_mix_prob;
                let c = rng.gen_range(1..active);
                if mix {
                    c
                } else {
                    active
                }
            })
            .collect();
        let styles = if crossovers.iter().all(|&c| c == active) {
            vec![w1; active]
        } else {
            let w2 = g.map(p, &z2, labels)?;
            mix_styles_per_sample(&w1, &w2, &crossovers, active)
        };
        let noise = g.sample_noise(n, st.resolution, rng);
        g.synthesis_forward(p, &styles, &noise, st.resolution, st.alpha)
    }

    /// One critic update followed by one generator update.
    pub fn step(&mut self, cache: &MelCache) -> Result<StepMetrics> {
        if self.is_finished() {
            return Err(Error::InvalidArgument("training schedule already completed".into()));
        }
        if cache.num_classes() > self.config.num_classes {
            return Err(Error::InvalidArgument(format!(
                "cache has labels up to {} but the networks know {} classes",
                cache.num_classes() - 1,
                self.config.num_classes
            )));
        }
        let st = self.stage()?;
        let (res, alpha) = (st.resolution, st.alpha);
        let mut rng = step_rng(self.config.seed, self.progress.step);
        let batch = sample_batch(cache, st.batch_size, res, &mut rng)?;
        let labels = &batch.labels;

        let fake = {
            let gp = self.generator.params.bind(false);
            self.fake(&gp, labels, &st, &mut rng)?.value().clone()
        };
        let d = &self.discriminator;
        let dp = d.params.bind(true);
        let real_scores = d.forward(&dp, &Var::constant(batch.mels.clone()), labels, res, alpha)?;
        let fake_scores = d.forward(&dp, &Var::constant(fake.clone()), labels, res, alpha)?;
        let u: Vec<f64> = (0..labels.len()).map(|_| rng.gen()).collect();
        let gp = gradient_penalty(
            |x| d.forward(&dp, x, labels, res, alpha),
            &batch.mels,
            &fake,
            &u,
            self.config.gp_lambda,
        )?;
        let d_loss = discriminator_loss(&real_scores, &fake_scores, &gp, self.config.drift_epsilon);
        let wasserstein =
            (real_scores.value().sum() as f64 - fake_scores.value().sum() as f64) / labels.len() as f64;
        let (d_loss_v, gp_v) = (d_loss.value().item() as f64, gp.value().item() as f64);
        if !(d_loss_v.is_finite() && gp_v.is_finite()) {
            return Err(self.numerical_failure(&st, d_loss_v, f64::NAN, gp_v));
        }
        let grads = dp.grads(&d_loss);
        drop(dp);
        self.d_opt.step(&mut self.discriminator.params, &grads, st.learning_rate);
        self.progress.d_updates += 1;

        let g_labels: Vec<usize> = (0..labels.len())
            .map(|_| cache.labels[rng.gen_range(0..cache.len())] as usize)
            .collect();
        let gp_bound = self.generator.params.bind(true);
        let dp = self.discriminator.params.bind(false);
        let fake = self.fake(&gp_bound, &g_labels, &st, &mut rng)?;
        let g_loss = generator_loss(&self.discriminator.forward(&dp, &fake, &g_labels, res, alpha)?);
        let g_loss_v = g_loss.value().item() as f64;
        if !g_loss_v.is_finite() {
            return Err(self.numerical_failure(&st, d_loss_v, g_loss_v, gp_v));
        }
        let grads = gp_bound.grads(&g_loss);
        drop(gp_bound);
        self.g_opt.step(&mut self.generator.params, &grads, st.learning_rate);
        self.progress.g_updates += 1;

        self.progress.step += 1;
        self.progress.samples_seen += st.batch_size as u64;
        Ok(StepMetrics {
            samples_seen: st.samples_seen,
            resolution: res,
            alpha,
            d_loss: d_loss_v,
            g_loss: g_loss_v,
            gp: gp_v,
            wasserstein,
        })
    }

    fn numerical_failure(&self, st: &StageState, d_loss: f64, g_loss: f64, gp: f64) -> Error {
        let bad_params: Vec<&str> = self
            .generator
            .params
            .params()
            .iter()
            .chain(self.discriminator.params.params())
            .filter(|p| !p.value.all_finite())
            .map(|p| p.name.as_str())
            .collect();
        Error::Numerical(format!(
            "non-finite loss at step {} ({} samples, resolution {}, alpha {}): d_loss {d_loss}, g_loss {g_loss}, gp {gp}; non-finite parameters: {:?}",
            self.progress.step, st.samples_seen, st.resolution, st.alpha, bad_params
        ))
    }

    /// Stage the generator samples at: the current one, or the last once finished.
    pub fn sampling_stage(&self) -> Result<StageState> {
        self.stage().or_else(|_| schedule_state(self.config.total_samples, &self.config))
    }

    /// Generates `[n, 1, r, r]` spectrograms at the current stage.
    pub fn sample(&self, labels: &[usize], seed: u64) -> Result<Tensor<f32>> {
        let st = self.sampling_stage()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = &self.generator;
        let z = g.sample_latents(labels.len(), &mut rng);
        let noise = g.sample_noise(labels.len(), st.resolution, &mut rng);
        g.generate(&z, labels, &noise, st.resolution, st.alpha)
    }
}

pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const METRICS_FILE: &str = "metrics.tsv";

/// Keeps the metrics lines written before `samples_seen`.
fn truncate_metrics(path: &Path, samples_seen: u64) -> Result<()> {
    let keep: Vec<String> = match File::open(path) {
        Ok(f) => BufReader::new(f)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io_at(path, e))?
            .into_iter()
            .filter(|l| {
                l.split('\t')
                    .next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .map_or(true, |s| s < samples_seen)
            })
            .collect(),
        Err(_) => vec![METRICS_HEADER.to_string()],
    };
    let mut text = keep.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io_at(path, e))
}

/// Trains until the schedule completes, checkpointing into `dir` every
/// `checkpoint_every` samples and at every stage boundary. With `resume`,
/// continues from `dir/latest.ckpt` when present. `on_step` sees the trainer
/// after every step.
pub fn run_training<F>(config: &TrainingConfig, cache: &MelCache, dir: impl AsRef<Path>, resume: bool, mut on_step: F) -> Result<Trainer>
where
    F: FnMut(&Trainer, &StepMetrics) -> Result<()>,
{
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    let latest = dir.join(LATEST_CHECKPOINT);
    let metrics_path = dir.join(METRICS_FILE);
    let mut trainer = if resume && latest.exists() {
        let t = Trainer::from_checkpoint(&Checkpoint::load(&latest)?, config)?;
        info!("resuming at {} samples", t.progress.samples_seen);
        truncate_metrics(&metrics_path, t.progress.samples_seen)?;
        t
    } else {
        std::fs::write(&metrics_path, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io_at(&metrics_path, e))?;
        Trainer::new(config.clone())?
    };
    let file = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io_at(&metrics_path, e))?;
    let mut log = BufWriter::new(file);
    let save = |t: &Trainer, log: &mut BufWriter<File>| -> Result<PathBuf> {
        log.flush().map_err(|e| Error::io_at(&metrics_path, e))?;
        let ck = t.checkpoint();
        let numbered = dir.join(format!("ckpt-{:09}.ckpt", t.progress.samples_seen));
        ck.save(&numbered)?;
        ck.save(&latest)?;
        Ok(numbered)
    };
    while !trainer.is_finished() {
        let before = trainer.stage()?;
        let m = match trainer.step(cache) {
            Ok(m) => m,
            Err(e) => {
                if matches!(e, Error::Numerical(_)) {
                    let diag = dir.join("diagnostic.txt");
                    let _ = std::fs::write(&diag, format!("{e}\n\n{}", trainer.config.to_text()));
                }
                let _ = log.flush();
                return Err(e);
            }
        };
        writeln!(log, "{}", m.to_tsv()).map_err(|e| Error::io_at(&metrics_path, e))?;
        on_step(&trainer, &m)?;
        let s = trainer.progress.samples_seen;
        let every = config.checkpoint_every;
        let crossed = s / every != before.samples_seen / every;
        let boundary = trainer.is_finished() || trainer.stage()?.segment != before.segment;
        if crossed || boundary {
            let path = save(&trainer, &mut log)?;
            info!("{} samples, resolution {}: wrote {}", s, m.resolution, path.display());
        }
    }
    log.flush().map_err(|e| Error::io_at(&metrics_path, e))?;
    Ok(trainer)
}
