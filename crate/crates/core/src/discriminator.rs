//! Class-conditional critic, growing mirror-symmetrically to the generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Float, Tensor, Var};
use crate::error::{Error, Result};
use crate::generator::{block_index, check_stage};
use crate::nn::{Bound, Conv, Dense, Embedding, ParamGroup, ParamStore, LEAKY_SLOPE, RELU_GAIN};

/// Variance epsilon inside the minibatch standard deviation.
pub const MBSTD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscriminatorConfig {
    pub num_classes: usize,
    pub embed_dim: usize,
    pub channels: usize,
    pub max_resolution: usize,
}

impl DiscriminatorConfig {
    pub fn full() -> Self {
        Self {
            num_classes: 10,
            embed_dim: 16,
            channels: 128,
            max_resolution: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.num_classes >= 1
            && self.embed_dim >= 1
            && self.channels >= 1
            && self.max_resolution >= 8
            && self.max_resolution.is_power_of_two();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid discriminator config {self:?}")))
        }
    }
}

/// Appends one channel holding the batch-averaged standard deviation.
pub fn minibatch_stddev<T: Float>(x: &Var<T>) -> Var<T> {
    let s = x.shape().to_vec();
    let centered = x.sub(&x.mean_axes(&[0]));
    let std = centered.square().mean_axes(&[0]).add_scalar(MBSTD_EPS).sqrt();
    let stat = std.mean_all().reshape(&[1, 1, 1, 1]).broadcast_to(&[s[0], 1, s[2], s[3]]);
    Var::concat(&[x.clone(), stat], 1)
}

/// Concatenates `[n, e]` embeddings as `e` spatially constant channels.
pub fn inject_class<T: Float>(x: &Var<T>, embedding: &Var<T>) -> Var<T> {
    let s = x.shape();
    let e = embedding.shape()[1];
    let planes = embedding.reshape(&[s[0], e, 1, 1]).broadcast_to(&[s[0], e, s[2], s[3]]);
    Var::concat(&[x.clone(), planes], 1)
}

#[derive(Debug, Clone)]
struct CriticBlock {
    conv0: Conv,
    conv1: Conv,
}

#[derive(Debug, Clone)]
pub struct Discriminator<T: Float> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<T>,
    embed: Embedding,
    /// Input heads indexed like generator blocks (4x4 at 0).
    inputs: Vec<Conv>,
    /// Downsampling blocks indexed by the block index of their input resolution.
    blocks: Vec<Option<CriticBlock>>,
    final_conv: Conv,
    dense0: Dense,
    dense1: Dense,
}

impl<T: Float> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (c, e) = (config.channels, config.embed_dim);
        let embed = Embedding::new(&mut store, "d.embed", config.num_classes, e, ParamGroup::Main, &mut rng);
        let n = block_index(config.max_resolution) + 1;
        let mut inputs = Vec::new();
        let mut blocks = Vec::new();
        for b in 0..n {
            let r = 4 << b;
            inputs.push(Conv::new(&mut store, &format!("d.input{r}"), 1, c, 1, RELU_GAIN, &mut rng));
            blocks.push((b > 0).then(|| CriticBlock {
                conv0: Conv::new(&mut store, &format!("d.block{r}.conv0"), c + e, c, 3, RELU_GAIN, &mut rng),
                conv1: Conv::new(&mut store, &format!("d.block{r}.conv1"), c, c, 3, RELU_GAIN, &mut rng),
            }));
        }
        let final_conv = Conv::new(&mut store, "d.final.conv", c + e + 1, c, 3, RELU_GAIN, &mut rng);
        let dense0 = Dense::new(&mut store, "d.final.dense0", c * 16, c, RELU_GAIN, ParamGroup::Main, &mut rng);
        let dense1 = Dense::new(&mut store, "d.final.dense1", c, 1, 1.0, ParamGroup::Main, &mut rng);
        Ok(Self {
            config,
            params: store,
            embed,
            inputs,
            blocks,
            final_conv,
            dense0,
            dense1,
        })
    }

    pub fn cast<U: Float>(&self) -> Discriminator<U> {
        Discriminator {
            config: self.config,
            params: self.params.cast(),
            embed: self.embed.clone(),
            inputs: self.inputs.clone(),
            blocks: self.blocks.clone(),
            final_conv: self.final_conv.clone(),
            dense0: self.dense0.clone(),
            dense1: self.dense1.clone(),
        }
    }

    fn from_input(&self, p: &Bound<T>, x: &Var<T>, b: usize) -> Var<T> {
        self.inputs[b].forward(p, x).leaky_relu(LEAKY_SLOPE)
    }

    fn block(&self, p: &Bound<T>, x: &Var<T>, emb: &Var<T>, b: usize) -> Var<T> {
        let blk = self.blocks[b].as_ref().expect("no downsampling block at 4x4");
        let h = blk.conv0.forward(p, &inject_class(x, emb)).leaky_relu(LEAKY_SLOPE);
        blk.conv1.forward(p, &h).leaky_relu(LEAKY_SLOPE).avg_pool2()
    }

    /// Critic scores `[n, 1]` for `[n, 1, r, r]` spectrograms at stage `r`.
    pub fn forward(&self, p: &Bound<T>, x: &Var<T>, labels: &[usize], resolution: usize, alpha: f64) -> Result<Var<T>> {
        check_stage(resolution, alpha, self.config.max_resolution)?;
        let s = x.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != resolution || s[3] != resolution || s[0] != labels.len() {
            return Err(Error::Shape(format!(
                "critic input {s:?} at stage {resolution} with {} labels",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{}",
                self.config.num_classes
            )));
        }
        let emb = self.embed.forward(p, labels);
        let top = block_index(resolution);
        let high = self.block(p, &self.from_input(p, x, top), &emb, top);
        let mut h = if alpha >= 1.0 {
            high
        } else {
            self.from_input(p, &x.avg_pool2(), top - 1).lerp(&high, alpha)
        };
        for b in (1..top).rev() {
            h = self.block(p, &h, &emb, b);
        }
        let h = minibatch_stddev(&inject_class(&h, &emb));
        let h = self.final_conv.forward(p, &h).leaky_relu(LEAKY_SLOPE);
        let n = labels.len();
        let h = h.reshape(&[n, self.config.channels * 16]);
        let h = self.dense0.forward(p, &h).leaky_relu(LEAKY_SLOPE);
        Ok(self.dense1.forward(p, &h))
    }

    /// Scores without building a trainable graph.
    pub fn score(&self, x: &Tensor<T>, labels: &[usize], resolution: usize, alpha: f64) -> Result<Tensor<T>> {
        let p = self.params.bind(false);
        Ok(self.forward(&p, &Var::constant(x.clone()), labels, resolution, alpha)?.value().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad;
    use rand::Rng;

    fn small() -> DiscriminatorConfig {
        DiscriminatorConfig {
            num_classes: 3,
            embed_dim: 2,
            channels: 3,
            max_resolution: 16,
        }
    }

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn minibatch_stddev_examples() {
        let same = Var::constant(Tensor::new(&[3, 2, 2, 2], vec![0.7f64; 24]));
        let out = minibatch_stddev(&same);
        assert_eq!(out.shape(), &[3, 3, 2, 2]);
        for i in 0..3 {
            for k in 0..4 {
                assert!(out.value().data()[i * 12 + 8 + k].abs() <= 1.0001e-4);
            }
        }
        let a = random(&[1, 2, 2, 2], 1);
        let b = a.map(|v| v + 2.0);
        let out = minibatch_stddev(&Var::constant(Tensor::stack(&[a.reshape(&[2, 2, 2]), b.reshape(&[2, 2, 2])])));
        for i in 0..2 {
            for k in 0..4 {
                assert!((out.value().data()[i * 12 + 8 + k] - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn class_planes() {
        let x = Var::constant(random(&[2, 3, 2, 2], 2));
        let e = Var::constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 0.0, 0.0]));
        let y = inject_class(&x, &e);
        assert_eq!(y.shape(), &[2, 5, 2, 2]);
        let d = y.value().data();
        assert!(d[12..16].iter().all(|&v| v == 1.0));
        assert!(d[16..20].iter().all(|&v| v == 2.0));
        assert!(d[32..40].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scores_shape_fade_and_labels() {
        let d = Discriminator::<f64>::new(small(), 7).unwrap();
        let x = random(&[4, 1, 16, 16], 3);
        let s = d.score(&x, &[0, 1, 2, 0], 16, 1.0).unwrap();
        assert_eq!(s.shape(), &[4, 1]);
        assert!(s.all_finite());
        assert_eq!(s, d.score(&x, &[0, 1, 2, 0], 16, 1.0).unwrap());
        let faded = d.score(&x, &[0, 1, 2, 0], 16, 0.0).unwrap();
        let low = Var::constant(x.clone()).avg_pool2().value().clone();
        assert_eq!(faded, d.score(&low, &[0, 1, 2, 0], 8, 1.0).unwrap());
        assert!(d.score(&x, &[0, 1, 2, 3], 16, 1.0).is_err());
        assert!(d.score(&x, &[0, 1, 2, 0], 8, 1.0).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let d = Discriminator::<f64>::new(small(), 8).unwrap();
        let x0 = random(&[2, 1, 8, 8], 4);
        let labels = [1, 2];
        let p = d.params.bind(false);
        let x = Var::leaf(x0.clone());
        let out = d.forward(&p, &x, &labels, 8, 1.0).unwrap().sum_all();
        let g = grad(&out, &[&x], false)[0].clone().unwrap();
        let f = |t: &Tensor<f64>| d.score(t, &labels, 8, 1.0).unwrap().sum();
        let h = 1e-6;
        for i in [0, 5, 17, 63, 64, 100, 127] {
            let mut a = x0.to_vec();
            a[i] += h;
            let mut b = x0.to_vec();
            b[i] -= h;
            let fd: f64 = (f(&Tensor::new(x0.shape(), a)) - f(&Tensor::new(x0.shape(), b))) / (2.0 * h);
            let an = g.value().data()[i];
            assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-3), "{i}: {fd} vs {an}");
        }
    }
}
