use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{grad, Float, Tensor, Var};

/// Learning-rate group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Ordinary parameters, trained at the base learning rate.
    Main,
    /// Mapping-network parameters, trained at a reduced rate.
    Mapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param<T: Float> {
    pub name: String,
    pub value: Tensor<T>,
    pub group: ParamGroup,
}

/// Flat, ordered registry of named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Float> {
    params: Vec<Param<T>>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, group: ParamGroup) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param { name, value, group });
        ParamId(self.params.len() - 1)
    }

    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        group: ParamGroup,
        rng: &mut R,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.add(name, Tensor::new(shape, data), group)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize], group: ParamGroup) -> ParamId {
        self.add(name, Tensor::zeros(shape), group)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        assert_eq!(
            value.shape(),
            self.params[id.0].value.shape(),
            "parameter {} shape changed",
            self.params[id.0].name
        );
        self.params[id.0].value = value;
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Binds every parameter into a fresh graph, as leaves when `trainable`.
    pub fn bind(&self, trainable: bool) -> Bound<T> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| {
                    if trainable {
                        Var::leaf(p.value.clone())
                    } else {
                        Var::constant(p.value.clone())
                    }
                })
                .collect(),
        }
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    group: p.group,
                })
                .collect(),
        }
    }
}

/// Parameters of a store, bound as graph variables for one forward pass.
pub struct Bound<T: Float> {
    vars: Vec<Var<T>>,
}

impl<T: Float> Bound<T> {
    pub fn var(&self, id: ParamId) -> &Var<T> {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<T>] {
        &self.vars
    }

    /// Gradients of a scalar loss with respect to every bound parameter.
    pub fn grads(&self, loss: &Var<T>) -> Vec<Option<Tensor<T>>> {
        let refs: Vec<&Var<T>> = self.vars.iter().collect();
        grad(loss, &refs, false)
            .into_iter()
            .map(|g| g.map(|v| v.value().clone()))
            .collect()
    }
}
