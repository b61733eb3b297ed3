use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::discriminator::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::nn::AdamConfig;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub seed: u64,
    pub num_classes: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub w_dim: usize,
    pub embed_dim: usize,
    pub mapping_layers: usize,
    pub start_resolution: usize,
    pub max_resolution: usize,
    pub adam_alpha: f64,
    pub adam_alpha_final_stage: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mapping_lr_factor: f64,
    pub drift_epsilon: f64,
    pub gp_lambda: f64,
    pub fade_samples: u64,
    pub stabilize_samples: u64,
    pub total_samples: u64,
    pub batch_by_resolution: BTreeMap<usize, usize>,
    pub style_mix_prob: f64,
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_classes: 10,
            channels: 128,
            latent_dim: 128,
            w_dim: 128,
            embed_dim: 16,
            mapping_layers: 8,
            start_resolution: 8,
            max_resolution: 128,
            adam_alpha: 0.001,
            adam_alpha_final_stage: 0.0015,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            mapping_lr_factor: 0.01,
            drift_epsilon: 0.001,
            gp_lambda: 10.0,
            fade_samples: 200_000,
            stabilize_samples: 200_000,
            total_samples: 4_050_000,
            batch_by_resolution: [(8, 256), (16, 128), (32, 64), (64, 32), (128, 32)].into_iter().collect(),
            style_mix_prob: 0.9,
            checkpoint_every: 100_000,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "num_classes",
    "channels",
    "latent_dim",
    "w_dim",
    "embed_dim",
    "mapping_layers",
    "start_resolution",
    "max_resolution",
    "adam_alpha",
    "adam_alpha_final_stage",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "mapping_lr_factor",
    "drift_epsilon",
    "gp_lambda",
    "fade_samples",
    "stabilize_samples",
    "total_samples",
    "batch_by_resolution",
    "style_mix_prob",
    "checkpoint_every",
];

fn parse<V: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<V> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("cannot parse {key} = {v:?}"),
    })
}

impl TrainingConfig {
    /// Full-scale digit configuration.
    pub fn full() -> Self {
        Self::default()
    }

    /// Two-class desk-scale run growing 8 -> 32 over 100k samples.
    pub fn toy() -> Self {
        Self {
            num_classes: 2,
            channels: 16,
            latent_dim: 32,
            w_dim: 32,
            embed_dim: 8,
            mapping_layers: 4,
            max_resolution: 32,
            adam_alpha_final_stage: 0.001,
            fade_samples: 20_000,
            stabilize_samples: 20_000,
            total_samples: 100_000,
            batch_by_resolution: [(8, 32), (16, 32), (32, 32)].into_iter().collect(),
            checkpoint_every: 20_000,
            ..Self::default()
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_classes: self.num_classes,
            latent_dim: self.latent_dim,
            w_dim: self.w_dim,
            embed_dim: self.embed_dim,
            mapping_layers: self.mapping_layers,
            channels: self.channels,
            max_resolution: self.max_resolution,
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            num_classes: self.num_classes,
            embed_dim: self.embed_dim,
            channels: self.channels,
            max_resolution: self.max_resolution,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            mapping_lr_factor: self.mapping_lr_factor,
        }
    }

    /// Resolutions trained, from `start_resolution` to `max_resolution`.
    pub fn resolutions(&self) -> Vec<usize> {
        std::iter::successors(Some(self.start_resolution), |&r| Some(r * 2))
            .take_while(|&r| r <= self.max_resolution)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        self.generator_config().validate()?;
        if !(self.start_resolution >= 8
            && self.start_resolution.is_power_of_two()
            && self.start_resolution <= self.max_resolution)
        {
            return bad(format!(
                "start_resolution {} must be a power of two in 8..={}",
                self.start_resolution, self.max_resolution
            ));
        }
        for r in self.resolutions() {
            match self.batch_by_resolution.get(&r) {
                Some(&b) if b >= 1 => {}
                _ => return bad(format!("batch_by_resolution has no positive entry for {r}")),
            }
        }
        let positive = [
            ("adam_alpha", self.adam_alpha),
            ("adam_alpha_final_stage", self.adam_alpha_final_stage),
            ("adam_eps", self.adam_eps),
            ("mapping_lr_factor", self.mapping_lr_factor),
            ("gp_lambda", self.gp_lambda),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.drift_epsilon >= 0.0) || !(0.0..=1.0).contains(&self.style_mix_prob) {
            return bad("drift_epsilon must be >= 0 and style_mix_prob in [0, 1]".into());
        }
        if self.fade_samples == 0 || self.stabilize_samples == 0 || self.checkpoint_every == 0 {
            return bad("fade, stabilize and checkpoint sample counts must be positive".into());
        }
        if self.num_classes > 256 {
            return bad("at most 256 classes fit the cache label byte".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Overrides fields from `key = value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: i + 1,
                    msg: format!("expected `key = value`, got {raw:?}"),
                });
            };
            self.set(i + 1, k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Sets one field from its textual value; `line` is used in error messages.
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(line, key, v)?,
            "num_classes" => self.num_classes = parse(line, key, v)?,
            "channels" => self.channels = parse(line, key, v)?,
            "latent_dim" => self.latent_dim = parse(line, key, v)?,
            "w_dim" => self.w_dim = parse(line, key, v)?,
            "embed_dim" => self.embed_dim = parse(line, key, v)?,
            "mapping_layers" => self.mapping_layers = parse(line, key, v)?,
            "start_resolution" => self.start_resolution = parse(line, key, v)?,
            "max_resolution" => self.max_resolution = parse(line, key, v)?,
            "adam_alpha" => self.adam_alpha = parse(line, key, v)?,
            "adam_alpha_final_stage" => self.adam_alpha_final_stage = parse(line, key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(line, key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(line, key, v)?,
            "adam_eps" => self.adam_eps = parse(line, key, v)?,
            "mapping_lr_factor" => self.mapping_lr_factor = parse(line, key, v)?,
            "drift_epsilon" => self.drift_epsilon = parse(line, key, v)?,
            "gp_lambda" => self.gp_lambda = parse(line, key, v)?,
            "fade_samples" => self.fade_samples = parse(line, key, v)?,
            "stabilize_samples" => self.stabilize_samples = parse(line, key, v)?,
            "total_samples" => self.total_samples = parse(line, key, v)?,
            "style_mix_prob" => self.style_mix_prob = parse(line, key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(line, key, v)?,
            "batch_by_resolution" => {
                let mut map = BTreeMap::new();
                for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let Some((r, b)) = item.split_once(':') else {
                        return Err(Error::Config {
                            line,
                            msg: format!("batch_by_resolution entry {item:?} is not `resolution:batch`"),
                        });
                    };
                    map.insert(parse(line, key, r.trim())?, parse(line, key, b.trim())?);
                }
                self.batch_by_resolution = map;
            }
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "seed" => self.seed.to_string(),
                "num_classes" => self.num_classes.to_string(),
                "channels" => self.channels.to_string(),
                "latent_dim" => self.latent_dim.to_string(),
                "w_dim" => self.w_dim.to_string(),
                "embed_dim" => self.embed_dim.to_string(),
                "mapping_layers" => self.mapping_layers.to_string(),
                "start_resolution" => self.start_resolution.to_string(),
                "max_resolution" => self.max_resolution.to_string(),
                "adam_alpha" => format!("{:?}", self.adam_alpha),
                "adam_alpha_final_stage" => format!("{:?}", self.adam_alpha_final_stage),
                "adam_beta1" => format!("{:?}", self.adam_beta1),
                "adam_beta2" => format!("{:?}", self.adam_beta2),
                "adam_eps" => format!("{:?}", self.adam_eps),
                "mapping_lr_factor" => format!("{:?}", self.mapping_lr_factor),
                "drift_epsilon" => format!("{:?}", self.drift_epsilon),
                "gp_lambda" => format!("{:?}", self.gp_lambda),
                "fade_samples" => self.fade_samples.to_string(),
                "stabilize_samples" => self.stabilize_samples.to_string(),
                "total_samples" => self.total_samples.to_string(),
                "batch_by_resolution" => self
                    .batch_by_resolution
                    .iter()
                    .map(|(r, b)| format!("{r}:{b}"))
                    .collect::<Vec<_>>()
                    .join(","),
                "style_mix_prob" => format!("{:?}", self.style_mix_prob),
                "checkpoint_every" => self.checkpoint_every.to_string(),
                _ => unreachable!(),
            };
            writeln!(s, "{key} = {value}").unwrap();
        }
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_full_scale_settings() {
        let c = TrainingConfig::full();
        assert_eq!((c.adam_alpha, c.adam_alpha_final_stage), (0.001, 0.0015));
        assert_eq!((c.adam_beta1, c.adam_beta2, c.adam_eps), (0.0, 0.99, 1e-8));
        assert_eq!((c.mapping_lr_factor, c.drift_epsilon, c.gp_lambda), (0.01, 0.001, 10.0));
        assert_eq!((c.fade_samples, c.stabilize_samples, c.total_samples), (200_000, 200_000, 4_050_000));
        assert_eq!(c.resolutions(), vec![8, 16, 32, 64, 128]);
        c.validate().unwrap();
        TrainingConfig::toy().validate().unwrap();
    }

    #[test]
    fn text_round_trip_and_hash() {
        let c = TrainingConfig::toy();
        let back = TrainingConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(TrainingConfig::full().hash(), c.hash());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# comment\nseed = 4\n\nbogus = 1\n";
        match TrainingConfig::parse(text) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(TrainingConfig::parse("seed = x"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(TrainingConfig::parse("seed"), Err(Error::Config { line: 1, .. })));
        let c = TrainingConfig::parse("batch_by_resolution = 8:4, 16:2 # small\nmax_resolution = 16").unwrap();
        assert_eq!(c.batch_by_resolution.get(&16), Some(&2));
        c.validate().unwrap();
        let c = TrainingConfig::parse("batch_by_resolution = 8:4").unwrap();
        assert!(c.validate().is_err());
    }
}
