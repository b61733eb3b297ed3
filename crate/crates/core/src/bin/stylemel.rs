use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use stylemel::dataset::{network_output_to_mel, preprocess_cache, scan_dataset, MelCache, DIGIT_CLASSES};
use stylemel::dsp::{mel_to_audio, write_wav, MelFilterbank, MelSpectrogram, GRIFFIN_LIM_ITERS};
use stylemel::evaluation::{
    evaluate_cer, evaluate_cer_audio, holdout_split, train_digit_classifier, ClassifierConfig, CommandEmbeddingProvider,
    CommandTranscriber, DigitClassifier, ExternalCommand, FdEvaluator, FeatureSource, GeneratorSource,
    DEFAULT_FD_SAMPLES,
};
use stylemel::plot::write_png;
use stylemel::training::{run_training, Checkpoint, Trainer, TrainingConfig};
use stylemel::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "stylemel", version, about = "Conditional style-based GAN for spoken-digit mel-spectrograms")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Full,
    Toy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a directory of per-class WAV folders into a mel cache.
    Preprocess {
        #[arg(long)]
        data_root: PathBuf,
        /// Comma-separated class folder names, in label order.
        #[arg(long, value_delimiter = ',', default_values_t = DIGIT_CLASSES.map(String::from))]
        classes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the GAN on a mel cache.
    Train {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// `key = value` file applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset: Preset,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        total_samples: Option<u64>,
        /// Continue from `out_dir/latest.ckpt` if present.
        #[arg(long)]
        resume: bool,
    },
    /// Sample spectrograms for one digit from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        digit: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also invert each spectrogram to a WAV file.
        #[arg(long)]
        wav: bool,
        #[arg(long, default_value_t = GRIFFIN_LIM_ITERS)]
        griffin_lim_iters: usize,
    },
    /// Invert a mel file to audio with Griffin-Lim.
    ToAudio {
        #[arg(long)]
        mel_file: PathBuf,
        #[arg(long)]
        out_wav: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = GRIFFIN_LIM_ITERS)]
        griffin_lim_iters: usize,
    },
    /// Fréchet distance between a checkpoint's samples and the training cache.
    EvaluateFd {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Classifier whose pooled features are compared.
        #[arg(long, required_unless_present = "embedding_cmd")]
        classifier: Option<PathBuf>,
        /// External command printing a speaker embedding for a WAV path.
        #[arg(long, conflicts_with = "classifier")]
        embedding_cmd: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FD_SAMPLES)]
        samples: usize,
        #[arg(long, default_value = "fd-work")]
        work_dir: PathBuf,
        #[arg(long, default_value_t = GRIFFIN_LIM_ITERS)]
        griffin_lim_iters: usize,
    },
    /// Character error rate of transcribed samples against classifier pseudo-labels.
    EvaluateCer {
        #[arg(long, required_unless_present = "audio_dir")]
        checkpoint: Option<PathBuf>,
        /// Score existing WAV files instead of generating.
        #[arg(long, conflicts_with = "checkpoint")]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        classifier: PathBuf,
        /// External command printing a transcript for a WAV path.
        #[arg(long)]
        transcriber_cmd: String,
        #[arg(long, default_value_t = 500)]
        samples_per_digit: usize,
        #[arg(long, value_delimiter = ',', default_values_t = DIGIT_CLASSES.map(String::from))]
        classes: Vec<String>,
        #[arg(long, default_value = "cer-work")]
        work_dir: PathBuf,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = GRIFFIN_LIM_ITERS)]
        griffin_lim_iters: usize,
    },
    /// Train the digit classifier used for FD features and pseudo-labels.
    TrainClassifier {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset: Preset,
        /// Fraction of each class held out for accuracy.
        #[arg(long, default_value_t = 0.1)]
        holdout: f64,
        #[arg(long)]
        train_samples: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Render a mel file as a PNG.
    Plot {
        #[arg(long)]
        mel_file: PathBuf,
        #[arg(long)]
        out_png: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Pixels per mel cell.
        #[arg(long, default_value_t = 4)]
        scale: usize,
    },
}

fn mel_record(path: &Path, index: usize) -> Result<(MelSpectrogram, u8)> {
    let cache = MelCache::load(path)?;
    let mel = cache.mels.get(index).cloned().ok_or_else(|| {
        Error::InvalidArgument(format!("{} holds {} records, no index {index}", path.display(), cache.len()))
    })?;
    Ok((mel, cache.labels[index]))
}

fn load_trainer(path: &Path) -> Result<Trainer> {
    let ckpt = Checkpoint::load(path)?;
    Trainer::from_checkpoint(&ckpt, &ckpt.config)
}

fn training_config(
    preset: Preset,
    file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    total: Option<u64>,
) -> Result<TrainingConfig> {
    let mut cfg = match preset {
        Preset::Full => TrainingConfig::full(),
        Preset::Toy => TrainingConfig::toy(),
    };
    if let Some(f) = file {
        cfg.apply_text(&std::fs::read_to_string(f).map_err(|e| Error::IoAt {
            path: f.to_path_buf(),
            source: e,
        })?)?;
    }
    for (i, o) in overrides.iter().enumerate() {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(i + 1, k.trim(), v.trim())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = total {
        cfg.total_samples = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Preprocess { data_root, classes, out } => {
            let entries = scan_dataset(&data_root, &classes)?;
            let report = preprocess_cache(&entries, &out)?;
            let cache = MelCache::load(&out)?;
            let counts = cache.class_counts();
            for (label, name) in classes.iter().enumerate() {
                println!("{name}\t{}", counts.get(&label).copied().unwrap_or(0));
            }
            for (path, why) in &report.skipped {
                eprintln!("skipped {}: {why}", path.display());
            }
            println!("total {}", report.written);
        }
        Command::Train {
            cache,
            out_dir,
            config,
            preset,
            overrides,
            total_samples,
            resume,
        } => {
            let cfg = training_config(preset, config.as_deref(), &overrides, seed, total_samples)?;
            let cache = MelCache::load(&cache)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::IoAt {
                path: out_dir.clone(),
                source: e,
            })?;
            let cfg_path = out_dir.join("config.txt");
            std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::IoAt {
                path: cfg_path,
                source: e,
            })?;
            let every = (cfg.total_samples / 200).max(1);
            let t = run_training(&cfg, &cache, &out_dir, resume, |_, m| {
                if m.samples_seen % every < cfg.batch_by_resolution.get(&m.resolution).copied().unwrap_or(1) as u64 {
                    info!(
                        "{} samples  res {}  alpha {:.3}  d {:.4}  g {:.4}  gp {:.4}",
                        m.samples_seen, m.resolution, m.alpha, m.d_loss, m.g_loss, m.gp
                    );
                }
                Ok(())
            })?;
            println!("finished at {} samples", t.progress.samples_seen);
        }
        Command::Generate {
            checkpoint,
            digit,
            count,
            out_dir,
            wav,
            griffin_lim_iters,
        } => {
            let t = load_trainer(&checkpoint)?;
            if digit > 9 || digit >= t.config.num_classes {
                return Err(Error::InvalidArgument(format!(
                    "digit {digit} outside 0..{}",
                    t.config.num_classes.min(10)
                )));
            }
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::IoAt {
                path: out_dir.clone(),
                source: e,
            })?;
            let out = t.sample(&vec![digit; count], seed.unwrap_or(0))?;
            let r = out.shape()[2];
            let fb = MelFilterbank::standard();
            for (i, grid) in out.data().chunks(r * r).enumerate() {
                let mel = network_output_to_mel(grid, r)?;
                if wav {
                    let clip = mel_to_audio(&mel, &fb, griffin_lim_iters)?;
                    write_wav(out_dir.join(format!("digit{digit}-{i:04}.wav")), &clip)?;
                }
                let mut rec = MelCache::new();
                rec.push(mel, digit as u8);
                rec.save(out_dir.join(format!("digit{digit}-{i:04}.mel")))?;
            }
            println!("wrote {count} samples to {}", out_dir.display());
        }
        Command::ToAudio {
            mel_file,
            out_wav,
            index,
            griffin_lim_iters,
        } => {
            let (mel, _) = mel_record(&mel_file, index)?;
            write_wav(&out_wav, &mel_to_audio(&mel, &MelFilterbank::standard(), griffin_lim_iters)?)?;
            println!("wrote {}", out_wav.display());
        }
        Command::EvaluateFd {
            checkpoint,
            cache,
            classifier,
            embedding_cmd,
            samples,
            work_dir,
            griffin_lim_iters,
        } => {
            let t = load_trainer(&checkpoint)?;
            let cache = MelCache::load(&cache)?;
            let clf;
            let provider;
            let features = match (&classifier, &embedding_cmd) {
                (Some(p), _) => {
                    clf = DigitClassifier::load(p)?;
                    FeatureSource::Classifier(&clf)
                }
                (None, Some(cmd)) => {
                    provider = CommandEmbeddingProvider::new(ExternalCommand::parse(cmd)?);
                    FeatureSource::Embedding {
                        provider: &provider,
                        work_dir,
                        griffin_lim_iters,
                    }
                }
                (None, None) => unreachable!("clap requires one feature source"),
            };
            let eval = FdEvaluator::new(&cache, features)?;
            let fd = eval.evaluate(&GeneratorSource::from_trainer(&t, &cache)?, samples, seed.unwrap_or(0))?;
            println!("fd {fd:.6}");
        }
        Command::EvaluateCer {
            checkpoint,
            audio_dir,
            classifier,
            transcriber_cmd,
            samples_per_digit,
            classes,
            work_dir,
            out,
            griffin_lim_iters,
        } => {
            let clf = DigitClassifier::load(&classifier)?;
            let transcriber = CommandTranscriber(ExternalCommand::parse(&transcriber_cmd)?);
            let report = match (checkpoint, audio_dir) {
                (Some(ck), _) => {
                    let t = load_trainer(&ck)?;
                    let src = GeneratorSource::from_trainer(&t, &MelCache::new())?;
                    let n = t.config.num_classes.min(classes.len());
                    let (mels, labels) = src.per_class(n, samples_per_digit, seed.unwrap_or(0))?;
                    evaluate_cer(&mels, Some(&labels), &clf, &transcriber, &classes, &work_dir, griffin_lim_iters)?
                }
                (None, Some(dir)) => {
                    let mut wavs: Vec<PathBuf> = std::fs::read_dir(&dir)
                        .map_err(|e| Error::IoAt {
                            path: dir.clone(),
                            source: e,
                        })?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                        .collect();
                    wavs.sort();
                    evaluate_cer_audio(&wavs, &clf, &transcriber, &classes)?
                }
                (None, None) => unreachable!("clap requires a sample source"),
            };
            let tsv = report.to_tsv();
            match out {
                Some(p) => {
                    std::fs::write(&p, &tsv).map_err(|e| Error::IoAt { path: p, source: e })?;
                    let total = report.total();
                    println!("cer {:.6} over {} samples ({} missing)", total.mean, total.scored, total.missing);
                }
                None => print!("{tsv}"),
            }
        }
        Command::TrainClassifier {
            cache,
            out,
            preset,
            holdout,
            train_samples,
            resolution,
            channels,
        } => {
            let cache = MelCache::load(&cache)?;
            let mut cfg = match preset {
                Preset::Full => ClassifierConfig::full(),
                Preset::Toy => ClassifierConfig::toy(),
            };
            cfg.num_classes = cfg.num_classes.max(cache.num_classes());
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.train_samples = train_samples.unwrap_or(cfg.train_samples);
            cfg.resolution = resolution.unwrap_or(cfg.resolution);
            cfg.channels = channels.unwrap_or(cfg.channels);
            if !(0.0..1.0).contains(&holdout) {
                return Err(Error::InvalidArgument(format!("holdout fraction {holdout} outside [0, 1)")));
            }
            let (_, held) = holdout_split(&cache, holdout, cfg.seed);
            let (model, report) = train_digit_classifier(&cache, &held, cfg)?;
            model.save(&out)?;
            println!(
                "held-out accuracy {:.4} ({}/{})",
                report.accuracy(),
                report.correct,
                report.held_out
            );
        }
        Command::Plot {
            mel_file,
            out_png,
            index,
            scale,
        } => {
            let (mel, _) = mel_record(&mel_file, index)?;
            write_png(&mel, &out_png, scale)?;
            println!("wrote {}", out_png.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
