//! Conditional style-based generator.
//!
//! A mapping network turns a latent `z` and a class embedding into an
//! intermediate latent `w`; the synthesis network grows a learned 4x4
//! constant into a spectrogram, modulating every layer with AdaIN styles
//! derived from `w` and adding per-channel scaled noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Float, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, Dense, Embedding, ParamGroup, ParamId, ParamStore, LEAKY_SLOPE, RELU_GAIN};

/// Variance epsilon of instance normalization.
pub const ADAIN_EPS: f64 = 1e-8;
/// Lower bound on the latent standard deviation.
pub const LATENT_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    pub latent_dim: usize,
    pub w_dim: usize,
    pub embed_dim: usize,
    pub mapping_layers: usize,
    /// Feature maps at every synthesis resolution.
    pub channels: usize,
    pub max_resolution: usize,
}

impl GeneratorConfig {
    /// Full-size network for 128x128 spectrograms of ten digits.
    pub fn full() -> Self {
        Self {
            num_classes: 10,
            latent_dim: 128,
            w_dim: 128,
            embed_dim: 16,
            mapping_layers: 8,
            channels: 128,
            max_resolution: 128,
        }
    }

    /// Number of synthesis blocks, 4x4 up to `max_resolution`.
    pub fn num_blocks(&self) -> usize {
        block_index(self.max_resolution) + 1
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.num_classes >= 1
            && self.latent_dim >= 2
            && self.w_dim >= 1
            && self.embed_dim >= 1
            && self.mapping_layers >= 1
            && self.channels >= 1
            && self.max_resolution >= 8
            && self.max_resolution.is_power_of_two();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid generator config {self:?}")))
        }
    }
}

/// Index of the block producing `resolution`, with the 4x4 block at 0.
pub(crate) fn block_index(resolution: usize) -> usize {
    (resolution / 4).trailing_zeros() as usize
}

/// Checks that `resolution` is a trainable stage of a network topping out at `max`.
pub(crate) fn check_stage(resolution: usize, alpha: f64, max: usize) -> Result<()> {
    if !(resolution.is_power_of_two() && (8..=max).contains(&resolution)) {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} is not a power of two in 8..={max}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Divides each row of `z` by its population standard deviation.
pub fn normalize_latent<T: Float>(z: &Tensor<T>) -> Tensor<T> {
    let d = *z.shape().last().expect("latent has at least one axis");
    let mut out = Vec::with_capacity(z.numel());
    for row in z.data().chunks(d) {
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let s = T::of(1.0 / var.sqrt().max(LATENT_STD_FLOOR));
        out.extend(row.iter().map(|&v| v * s));
    }
    Tensor::new(z.shape(), out)
}

/// Adaptive instance normalization of `[n, c, h, w]` maps with `[n, c]` styles.
pub fn adain<T: Float>(x: &Var<T>, y_scale: &Var<T>, y_bias: &Var<T>) -> Var<T> {
    let s = x.shape();
    let (n, c) = (s[0], s[1]);
    let mu = x.mean_axes(&[2, 3]);
    let xc = x.sub(&mu);
    let sigma = xc.square().mean_axes(&[2, 3]).add_scalar(ADAIN_EPS).sqrt();
    xc.div(&sigma)
        .mul(&y_scale.reshape(&[n, c, 1, 1]))
        .add(&y_bias.reshape(&[n, c, 1, 1]))
}

/// Adds a single-channel noise image to every channel with a per-channel scale.
pub fn noise_inject<T: Float>(x: &Var<T>, noise: &Var<T>, scale: &Var<T>) -> Result<Var<T>> {
    let (s, ns) = (x.shape(), noise.shape());
    if ns.len() != 4 || ns[0] != s[0] || ns[1] != 1 || ns[2..] != s[2..] {
        return Err(Error::Shape(format!("noise {ns:?} does not fit feature maps {s:?}")));
    }
    if scale.shape() != [s[1]] {
        return Err(Error::Shape(format!(
            "noise scale {:?} for {} channels",
            scale.shape(),
            s[1]
        )));
    }
    Ok(x.add(&noise.mul(&scale.reshape(&[1, s[1], 1, 1]))))
}

/// Per-block style sources: blocks before `crossover` take `w1`, the rest `w2`.
pub fn style_mix<W: Clone>(w1: &W, w2: &W, crossover: usize, n_blocks: usize) -> Vec<W> {
    (0..n_blocks)
        .map(|b| if b < crossover { w1.clone() } else { w2.clone() })
        .collect()
}

/// Per-sample style mixing of `[n, d]` latents: sample `i` uses `w1` for
/// blocks below `crossovers[i]` and `w2` from there on.
pub fn mix_styles_per_sample<T: Float>(w1: &Var<T>, w2: &Var<T>, crossovers: &[usize], n_blocks: usize) -> Vec<Var<T>> {
    let n = w1.shape()[0];
    assert_eq!(crossovers.len(), n, "one crossover per sample");
    (0..n_blocks)
        .map(|b| {
            let mask: Vec<T> = crossovers
                .iter()
                .map(|&c| if b < c { T::one() } else { T::zero() })
                .collect();
            if mask.iter().all(|&m| m == T::one()) {
                return w1.clone();
            }
            if mask.iter().all(|&m| m == T::zero()) {
                return w2.clone();
            }
            let m = Var::constant(Tensor::new(&[n, 1], mask));
            w2.add(&w1.sub(w2).mul(&m))
        })
        .collect()
}

/// Learned affine map from `w` to an AdaIN style `(y_s, y_b)`.
#[derive(Debug, Clone)]
pub struct StyleAffine {
    pub scale: Dense,
    pub bias: Dense,
}

impl StyleAffine {
    pub fn new<T: Float, R: Rng>(store: &mut ParamStore<T>, name: &str, w_dim: usize, channels: usize, rng: &mut R) -> Self {
        let scale = Dense::new(store, &format!("{name}.scale"), w_dim, channels, 1.0, ParamGroup::Main, rng);
        store.set(scale.bias, Tensor::ones(&[channels]));
        let bias = Dense::new(store, &format!("{name}.bias"), w_dim, channels, 1.0, ParamGroup::Main, rng);
        Self { scale, bias }
    }

    pub fn forward<T: Float>(&self, p: &Bound<T>, w: &Var<T>) -> (Var<T>, Var<T>) {
        (self.scale.forward(p, w), self.bias.forward(p, w))
    }
}

#[derive(Debug, Clone)]
struct SynthesisBlock {
    /// Absent in the 4x4 block, which starts from the learned constant.
    conv0: Option<Conv>,
    conv1: Conv,
    noise: [ParamId; 2],
    style: [StyleAffine; 2],
}

/// Generator parameters plus the layer layout that interprets them.
#[derive(Debug, Clone)]
pub struct Generator<T: Float> {
    pub config: GeneratorConfig,
    pub params: ParamStore<T>,
    embed: Embedding,
    mapping: Vec<Dense>,
    constant: ParamId,
    blocks: Vec<SynthesisBlock>,
    heads: Vec<Conv>,
}

impl<T: Float> Generator<T> {
    /// Freshly initialized generator; parameter values depend only on `seed`.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.channels;
        let embed = Embedding::new(&mut store, "g.embed", config.num_classes, config.embed_dim, ParamGroup::Mapping, &mut rng);
        let mapping = (0..config.mapping_layers)
            .map(|i| {
                let in_dim = if i == 0 { config.latent_dim } else { config.w_dim } + config.embed_dim;
                Dense::new(&mut store, &format!("g.mapping.{i}"), in_dim, config.w_dim, RELU_GAIN, ParamGroup::Mapping, &mut rng)
            })
            .collect();
        let constant = store.add_zeros("g.const", &[1, c, 4, 4], ParamGroup::Main);
        let mut blocks = Vec::new();
        let mut heads = Vec::new();
        for b in 0..config.num_blocks() {
            let r = 4 << b;
            let name = format!("g.block{r}");
            let conv0 = (b > 0).then(|| Conv::new(&mut store, &format!("{name}.conv0"), c, c, 3, RELU_GAIN, &mut rng));
            let conv1 = Conv::new(&mut store, &format!("{name}.conv1"), c, c, 3, RELU_GAIN, &mut rng);
            let noise = [0, 1].map(|k| store.add_zeros(format!("{name}.noise{k}"), &[c], ParamGroup::Main));
            let style = [0, 1].map(|k| StyleAffine::new(&mut store, &format!("{name}.style{k}"), config.w_dim, c, &mut rng));
            blocks.push(SynthesisBlock { conv0, conv1, noise, style });
            heads.push(Conv::new(&mut store, &format!("g.head{r}"), c, 1, 1, 1.0, &mut rng));
        }
        Ok(Self {
            config,
            params: store,
            embed,
            mapping,
            constant,
            blocks,
            heads,
        })
    }

    /// The same network with parameters converted to another precision.
    pub fn cast<U: Float>(&self) -> Generator<U> {
        Generator {
            config: self.config,
            params: self.params.cast(),
            embed: self.embed.clone(),
            mapping: self.mapping.clone(),
            constant: self.constant,
            blocks: self.blocks.clone(),
            heads: self.heads.clone(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks in use when producing `resolution`.
    pub fn active_blocks(&self, resolution: usize) -> usize {
        block_index(resolution) + 1
    }

    /// Parameters belonging to the 1x1 output head at `resolution`.
    pub fn head_params(&self, resolution: usize) -> [ParamId; 2] {
        let h = &self.heads[block_index(resolution)];
        [h.weight, h.bias]
    }

    /// Standard-normal latents, `[n, latent_dim]`.
    pub fn sample_latents<R: Rng>(&self, n: usize, rng: &mut R) -> Tensor<T> {
        let d = self.config.latent_dim;
        Tensor::new(&[n, d], (0..n * d).map(|_| T::of(rng.sample(StandardNormal))).collect())
    }

    /// Two independent `[n, 1, r, r]` noise images per active block.
    pub fn sample_noise<R: Rng>(&self, n: usize, resolution: usize, rng: &mut R) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for b in 0..self.active_blocks(resolution) {
            let r = 4 << b;
            for _ in 0..2 {
                out.push(Tensor::new(
                    &[n, 1, r, r],
                    (0..n * r * r).map(|_| T::of(rng.sample(StandardNormal))).collect(),
                ));
            }
        }
        out
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.config.num_classes) {
            Some(l) => Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{}",
                self.config.num_classes
            ))),
            None => Ok(()),
        }
    }

    /// Class embeddings, `[n, embed_dim]`.
    pub fn embed(&self, p: &Bound<T>, labels: &[usize]) -> Result<Var<T>> {
        self.check_labels(labels)?;
        Ok(self.embed.forward(p, labels))
    }

    /// Mapping network on an already normalized latent; the embedding is
    /// concatenated to the input of every layer.
    pub fn mapping_forward(&self, p: &Bound<T>, z: &Var<T>, embedding: &Var<T>) -> Var<T> {
        let mut h = z.clone();
        for layer in &self.mapping {
            h = layer
                .forward(p, &Var::concat(&[h, embedding.clone()], 1))
                .leaky_relu(LEAKY_SLOPE);
        }
        h
    }

    /// `w` for raw latents and labels.
    pub fn map(&self, p: &Bound<T>, z: &Tensor<T>, labels: &[usize]) -> Result<Var<T>> {
        if z.ndim() != 2 || z.shape()[1] != self.config.latent_dim || z.shape()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "latents {:?} for {} labels of dimension {}",
                z.shape(),
                labels.len(),
                self.config.latent_dim
            )));
        }
        let e = self.embed(p, labels)?;
        Ok(self.mapping_forward(p, &Var::constant(normalize_latent(z)), &e))
    }

    fn block_forward(&self, p: &Bound<T>, b: usize, x: Var<T>, w: &Var<T>, noise: &[Tensor<T>]) -> Result<Var<T>> {
        let blk = &self.blocks[b];
        let mut x = x;
        if let Some(conv0) = &blk.conv0 {
            x = conv0.forward(p, &x.upsample2());
        }
        for k in 0..2 {
            if k == 1 {
                x = blk.conv1.forward(p, &x);
            }
            x = noise_inject(&x, &Var::constant(noise[k].clone()), p.var(blk.noise[k]))?;
            x = x.leaky_relu(LEAKY_SLOPE);
            let (ys, yb) = blk.style[k].forward(p, w);
            x = adain(&x, &ys, &yb);
        }
        Ok(x)
    }

    /// Synthesis network at a stage; `styles` holds one `[n, w_dim]` latent
    /// per active block and `noise` two images per active block.
    pub fn synthesis_forward(
        &self,
        p: &Bound<T>,
        styles: &[Var<T>],
        noise: &[Tensor<T>],
        resolution: usize,
        alpha: f64,
    ) -> Result<Var<T>> {
        check_stage(resolution, alpha, self.config.max_resolution)?;
        let active = self.active_blocks(resolution);
        if styles.len() != active || noise.len() != 2 * active {
            return Err(Error::Shape(format!(
                "stage {resolution} needs {active} styles and {} noise images, got {} and {}",
                2 * active,
                styles.len(),
                noise.len()
            )));
        }
        let n = styles[0].shape()[0];
        let c = self.config.channels;
        let mut x = p.var(self.constant).broadcast_to(&[n, c, 4, 4]);
        let mut prev = None;
        for b in 0..active {
            if b == active - 1 {
                prev = Some(x.clone());
            }
            x = self.block_forward(p, b, x, &styles[b], &noise[2 * b..2 * b + 2])?;
        }
        let out = self.heads[active - 1].forward(p, &x);
        if alpha >= 1.0 {
            return Ok(out);
        }
        let prev = prev.expect("at least two active blocks");
        let low = self.heads[active - 2].forward(p, &prev).upsample2();
        Ok(low.lerp(&out, alpha))
    }

    /// Full forward pass without style mixing.
    pub fn forward(
        &self,
        p: &Bound<T>,
        z: &Tensor<T>,
        labels: &[usize],
        noise: &[Tensor<T>],
        resolution: usize,
        alpha: f64,
    ) -> Result<Var<T>> {
        let w = self.map(p, z, labels)?;
        let styles = vec![w; self.active_blocks(resolution)];
        self.synthesis_forward(p, &styles, noise, resolution, alpha)
    }

    /// Inference-only forward pass returning `[n, 1, r, r]` normalized spectrograms.
    pub fn generate(
        &self,
        z: &Tensor<T>,
        labels: &[usize],
        noise: &[Tensor<T>],
        resolution: usize,
        alpha: f64,
    ) -> Result<Tensor<T>> {
        let p = self.params.bind(false);
        Ok(self.forward(&p, z, labels, noise, resolution, alpha)?.value().clone())
    }
}
