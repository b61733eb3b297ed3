use std::path::Path;

use super::config::TrainingConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Adam, Moments, ParamGroup, ParamStore};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training progress counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Progress {
    pub samples_seen: u64,
    pub step: u64,
    pub d_updates: u64,
    pub g_updates: u64,
}

/// Everything needed to resume or sample from a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub config_hash: String,
    pub progress: Progress,
    pub generator: ParamStore<f32>,
    pub discriminator: ParamStore<f32>,
    pub g_moments: Vec<Option<Moments<f32>>>,
    pub d_moments: Vec<Option<Moments<f32>>>,
}

pub(crate) struct Writer(pub(crate) Vec<u8>);

impl Writer {
    pub(crate) fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    pub(crate) fn floats(&mut self, t: &Tensor<f32>) {
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    pub(crate) fn store(&mut self, s: &ParamStore<f32>) {
        self.u32(s.len() as u32);
        for p in s.params() {
            self.str(&p.name);
            self.u8(match p.group {
                ParamGroup::Main => 0,
                ParamGroup::Mapping => 1,
            });
            self.u32(p.value.ndim() as u32);
            for &d in p.value.shape() {
                self.u64(d as u64);
            }
            self.floats(&p.value);
        }
    }
    pub(crate) fn moments(&mut self, m: &[Option<Moments<f32>>]) {
        self.u32(m.len() as u32);
        for st in m {
            match st {
                None => self.u8(0),
                Some(st) => {
                    self.u8(1);
                    self.u64(st.steps);
                    self.floats(&st.m);
                    self.floats(&st.v);
                }
            }
        }
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
    pub(crate) fn floats(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        Ok(Tensor::new(
            shape,
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
        ))
    }
    pub(crate) fn store(&mut self) -> Result<ParamStore<f32>> {
        let mut s = ParamStore::new();
        for _ in 0..self.u32()? {
            let name = self.str()?;
            let group = match self.u8()? {
                0 => ParamGroup::Main,
                1 => ParamGroup::Mapping,
                g => return Err(Error::Checkpoint(format!("unknown parameter group {g}"))),
            };
            let ndim = self.u32()? as usize;
            if ndim > 8 {
                return Err(Error::Checkpoint(format!("{name} has {ndim} axes")));
            }
            let shape = (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let value = self.floats(&shape)?;
            s.add(name, value, group);
        }
        Ok(s)
    }
    pub(crate) fn moments(&mut self, store: &ParamStore<f32>) -> Result<Vec<Option<Moments<f32>>>> {
        let n = self.u32()? as usize;
        if n != store.len() {
            return Err(Error::Checkpoint(format!("{n} optimizer slots for {} parameters", store.len())));
        }
        (0..n)
            .map(|i| match self.u8()? {
                0 => Ok(None),
                1 => {
                    let steps = self.u64()?;
                    let shape = store.params()[i].value.shape().to_vec();
                    Ok(Some(Moments {
                        steps,
                        m: self.floats(&shape)?,
                        v: self.floats(&shape)?,
                    }))
                }
                f => Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
            })
            .collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.config_hash);
        w.str(&self.config.to_text());
        let p = self.progress;
        for v in [p.samples_seen, p.step, p.d_updates, p.g_updates] {
            w.u64(v);
        }
        w.store(&self.generator);
        w.store(&self.discriminator);
        w.moments(&self.g_moments);
        w.moments(&self.d_moments);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash = r.str()?;
        let config = TrainingConfig::parse(&r.str()?)?;
        if config.hash() != config_hash {
            return Err(Error::Checkpoint("embedded config does not match its hash".into()));
        }
        let progress = Progress {
            samples_seen: r.u64()?,
            step: r.u64()?,
            d_updates: r.u64()?,
            g_updates: r.u64()?,
        };
        let generator = r.store()?;
        let discriminator = r.store()?;
        let g_moments = r.moments(&generator)?;
        let d_moments = r.moments(&discriminator)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config,
            config_hash,
            progress,
            generator,
            discriminator,
            g_moments,
            d_moments,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io_at(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io_at(path, e))?)
    }

    /// Refuses a checkpoint written under a different configuration.
    pub fn check_config(&self, runtime: &TrainingConfig) -> Result<()> {
        let expected = runtime.hash();
        if self.config_hash != expected {
            return Err(Error::ConfigMismatch {
                expected,
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }
}

/// Copies values and moments into freshly built stores, matching by name and shape.
pub(crate) fn restore(
    target: &mut ParamStore<f32>,
    opt: &mut Adam<f32>,
    source: &ParamStore<f32>,
    moments: &[Option<Moments<f32>>],
) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, network has {}",
            source.len(),
            target.len()
        )));
    }
    for (i, (t, s)) in target.params().iter().zip(source.params()).enumerate() {
        if t.name != s.name || t.value.shape() != s.value.shape() || t.group != s.group {
            return Err(Error::Checkpoint(format!(
                "parameter {i} is {} {:?} in the checkpoint but {} {:?} in the network",
                s.name,
                s.value.shape(),
                t.name,
                t.value.shape()
            )));
        }
    }
    for (t, s) in target.params_mut().iter_mut().zip(source.params()) {
        t.value = s.value.clone();
    }
    opt.state = moments.to_vec();
    Ok(())
}
