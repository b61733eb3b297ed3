use super::params::{ParamGroup, ParamStore};
use crate::autodiff::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate multiplier applied to [`ParamGroup::Mapping`].
    pub mapping_lr_factor: f64,
}

/// First and second moment estimates plus step count of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T: Float> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub steps: u64,
}

/// Adam with per-parameter step counts, so parameters that join training
/// late (newly grown blocks) start from zero moments and unbiased estimates.
#[derive(Debug, Clone)]
pub struct Adam<T: Float> {
    pub config: AdamConfig,
    pub state: Vec<Option<Moments<T>>>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        Self {
            config,
            state: vec![None; store.len()],
        }
    }

    /// Effective learning rate of a parameter group at base rate `lr`.
    pub fn group_lr(&self, group: ParamGroup, lr: f64) -> f64 {
        match group {
            ParamGroup::Main => lr,
            ParamGroup::Mapping => lr * self.config.mapping_lr_factor,
        }
    }

    /// Applies one update; parameters whose gradient is `None` are untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], lr: f64) {
        assert_eq!(grads.len(), store.len(), "gradient count mismatch");
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let lr_eff = self.group_lr(store.params()[i].group, lr);
            let param = &mut store.params_mut()[i];
            let st = self.state[i].get_or_insert_with(|| Moments {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
                steps: 0,
            });
            st.steps += 1;
            let (b1, b2) = (T::of(beta1), T::of(beta2));
            let m = st.m.zip_map(g, |m, g| b1 * m + (T::one() - b1) * g);
            let v = st.v.zip_map(g, |v, g| b2 * v + (T::one() - b2) * g * g);
            let t = st.steps as i32;
            let step = lr_eff * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
            let (step, eps) = (T::of(step), T::of(eps));
            let data: Vec<T> = param
                .value
                .data()
                .iter()
                .zip(m.data().iter().zip(v.data()))
                .map(|(&p, (&m, &v))| p - step * m / (v.sqrt() + eps))
                .collect();
            param.value = Tensor::new(param.value.shape(), data);
            st.m = m;
            st.v = v;
        }
    }
}
