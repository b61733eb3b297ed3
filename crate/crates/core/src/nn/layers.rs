//! Layers with equalized learning rate: weights are stored as unit-variance
//! normals and multiplied at runtime by the He constant `gain / sqrt(fan_in)`.

use rand::Rng;

use super::params::{Bound, ParamGroup, ParamId, ParamStore};
use crate::autodiff::{Float, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Gain used in front of leaky-ReLU layers.
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

pub fn he_scale(gain: f64, fan_in: usize) -> f64 {
    gain / (fan_in as f64).sqrt()
}

/// Fully connected layer `y = x W^T * c + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    scale: f64,
}

impl Dense {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        group: ParamGroup,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_normal(format!("{name}.weight"), &[out_dim, in_dim], group, rng);
        let bias = store.add_zeros(format!("{name}.bias"), &[out_dim], group);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
            scale: he_scale(gain, in_dim),
        }
    }

    pub fn forward<T: Float>(&self, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        assert_eq!(x.shape()[1], self.in_dim, "dense input width");
        x.matmul(p.var(self.weight), false, true)
            .scale(self.scale)
            .add(p.var(self.bias))
    }
}

/// Square-kernel convolution with stride 1 and "same" padding.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    scale: f64,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_normal(
            format!("{name}.weight"),
            &[out_ch, in_ch, kernel, kernel],
            ParamGroup::Main,
            rng,
        );
        let bias = store.add_zeros(format!("{name}.bias"), &[out_ch], ParamGroup::Main);
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            scale: he_scale(gain, in_ch * kernel * kernel),
        }
    }

    pub fn forward<T: Float>(&self, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        self.forward_strided(p, x, 1)
    }

    pub fn forward_strided<T: Float>(&self, p: &Bound<T>, x: &Var<T>, stride: usize) -> Var<T> {
        let w = p.var(self.weight).scale(self.scale);
        let b = p.var(self.bias).reshape(&[1, self.out_ch, 1, 1]);
        x.conv2d(&w, stride, self.kernel / 2).add(&b)
    }
}

/// Learned class embedding table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub classes: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        classes: usize,
        dim: usize,
        group: ParamGroup,
        rng: &mut R,
    ) -> Self {
        let table = store.add_normal(format!("{name}.table"), &[classes, dim], group, rng);
        Self { table, classes, dim }
    }

    /// Rows of the table for each label, `[n, dim]`.
    pub fn forward<T: Float>(&self, p: &Bound<T>, labels: &[usize]) -> Var<T> {
        let mut onehot = vec![T::zero(); labels.len() * self.classes];
        for (i, &l) in labels.iter().enumerate() {
            assert!(l < self.classes, "label {l} out of range");
            onehot[i * self.classes + l] = T::one();
        }
        Var::constant(Tensor::new(&[labels.len(), self.classes], onehot)).matmul(
            p.var(self.table),
            false,
            false,
        )
    }
}
