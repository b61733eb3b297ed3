use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use super::float::Float;
use super::kernels::{self, ConvGeom, ResamplePlan};
use super::tensor::{numel, Tensor};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

enum Op<T: Float> {
    Add(Var<T>, Var<T>),
    Sub(Var<T>, Var<T>),
    Mul(Var<T>, Var<T>),
    Div(Var<T>, Var<T>),
    Neg(Var<T>),
    Scale(Var<T>, f64),
    AddScalar(Var<T>),
    LeakyRelu(Var<T>, f64),
    Sqrt(Var<T>),
    Exp(Var<T>),
    Log(Var<T>),
    SumTo(Var<T>),
    BroadcastTo(Var<T>),
    Reshape(Var<T>),
    MatMul(Var<T>, Var<T>, bool, bool),
    Conv(Var<T>, Var<T>, ConvGeom),
    ConvInputGrad(Var<T>, Var<T>, ConvGeom),
    ConvWeightGrad(Var<T>, Var<T>, ConvGeom),
    Resample(Var<T>, Arc<ResamplePlan>),
    Narrow(Var<T>, usize, usize),
    PadAxis(Var<T>, usize, usize),
    Concat(Vec<Var<T>>, usize),
}

impl<T: Float> Op<T> {
    fn parents(&self) -> Vec<&Var<T>> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b, _, _) => vec![a, b],
            Conv(a, b, _) | ConvInputGrad(a, b, _) | ConvWeightGrad(a, b, _) => vec![a, b],
            Neg(a) | Scale(a, _) | AddScalar(a) | LeakyRelu(a, _) | Sqrt(a) | Exp(a)
            | Log(a) | SumTo(a) | BroadcastTo(a) | Reshape(a) | Resample(a, _)
            | Narrow(a, _, _) | PadAxis(a, _, _) => vec![a],
            Concat(xs, _) => xs.iter().collect(),
        }
    }
}

struct Node<T: Float> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    op: Option<Op<T>>,
}

/// A node of a dynamically built computation graph.
///
/// Gradients are themselves expressed as graph operations, so gradients of
/// gradients are available when [`grad`] is called with `create_graph`.
#[derive(Clone)]
pub struct Var<T: Float>(Rc<Node<T>>);

impl<T: Float> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.0.id, self.0.value)
    }
}

impl<T: Float> Var<T> {
    /// A value that never receives gradients.
    pub fn constant(value: Tensor<T>) -> Self {
        Self(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: false,
            op: None,
        }))
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn leaf(value: Tensor<T>) -> Self {
        Self(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: true,
            op: None,
        }))
    }

    fn from_op(value: Tensor<T>, op: Op<T>) -> Self {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Self(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            op: if requires_grad { Some(op) } else { None },
        }))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        let v = kernels::binary(self.value(), other.value(), |a, b| a + b);
        Self::from_op(v, Op::Add(self.clone(), other.clone()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        let v = kernels::binary(self.value(), other.value(), |a, b| a - b);
        Self::from_op(v, Op::Sub(self.clone(), other.clone()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let v = kernels::binary(self.value(), other.value(), |a, b| a * b);
        Self::from_op(v, Op::Mul(self.clone(), other.clone()))
    }

    pub fn div(&self, other: &Self) -> Self {
        let v = kernels::binary(self.value(), other.value(), |a, b| a / b);
        Self::from_op(v, Op::Div(self.clone(), other.clone()))
    }

    pub fn neg(&self) -> Self {
        Self::from_op(self.value().map(|a| -a), Op::Neg(self.clone()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let st = T::of(s);
        Self::from_op(self.value().map(|a| a * st), Op::Scale(self.clone(), s))
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let st = T::of(s);
        Self::from_op(self.value().map(|a| a + st), Op::AddScalar(self.clone()))
    }

    pub fn square(&self) -> Self {
        self.mul(self)
    }

    pub fn leaky_relu(&self, slope: f64) -> Self {
        let sl = T::of(slope);
        let v = self
            .value()
            .map(|a| if a > T::zero() { a } else { a * sl });
        Self::from_op(v, Op::LeakyRelu(self.clone(), slope))
    }

    pub fn sqrt(&self) -> Self {
        Self::from_op(self.value().map(|a| a.sqrt()), Op::Sqrt(self.clone()))
    }

    pub fn exp(&self) -> Self {
        Self::from_op(self.value().map(|a| a.exp()), Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Self {
        Self::from_op(self.value().map(|a| a.ln()), Op::Log(self.clone()))
    }

    /// Sums down to a shape that broadcasts to this one.
    pub fn sum_to(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        Self::from_op(kernels::sum_to(self.value(), shape), Op::SumTo(self.clone()))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        Self::from_op(
            kernels::broadcast_to(self.value(), shape),
            Op::BroadcastTo(self.clone()),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        Self::from_op(self.value().reshape(shape), Op::Reshape(self.clone()))
    }

    /// Sum over the given axes, keeping them as length-1 axes.
    pub fn sum_axes(&self, axes: &[usize]) -> Self {
        let mut shape = self.shape().to_vec();
        for &a in axes {
            shape[a] = 1;
        }
        self.sum_to(&shape)
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Self {
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes).scale(1.0 / count as f64)
    }

    pub fn sum_all(&self) -> Self {
        self.sum_to(&[]).reshape(&[])
    }

    pub fn mean_all(&self) -> Self {
        let n = numel(self.shape());
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn matmul(&self, other: &Self, ta: bool, tb: bool) -> Self {
        let v = kernels::matmul(self.value(), other.value(), ta, tb);
        Self::from_op(v, Op::MatMul(self.clone(), other.clone(), ta, tb))
    }

    pub fn conv2d(&self, weight: &Self, stride: usize, pad: usize) -> Self {
        let g = ConvGeom { stride, pad };
        let v = kernels::conv2d(self.value(), weight.value(), g);
        Self::from_op(v, Op::Conv(self.clone(), weight.clone(), g))
    }

    fn conv_input_grad(gy: &Self, w: &Self, g: ConvGeom, hw: (usize, usize)) -> Self {
        let v = kernels::conv2d_input_grad(gy.value(), w.value(), g, hw);
        Self::from_op(v, Op::ConvInputGrad(gy.clone(), w.clone(), g))
    }

    fn conv_weight_grad(x: &Self, gy: &Self, g: ConvGeom, k: usize) -> Self {
        let v = kernels::conv2d_weight_grad(x.value(), gy.value(), g, k);
        Self::from_op(v, Op::ConvWeightGrad(x.clone(), gy.clone(), g))
    }

    pub fn resample(&self, plan: &Arc<ResamplePlan>) -> Self {
        Self::from_op(
            kernels::resample(self.value(), plan),
            Op::Resample(self.clone(), Arc::clone(plan)),
        )
    }

    pub fn upsample2(&self) -> Self {
        let s = self.shape();
        let r = s.len();
        self.resample(&Arc::new(ResamplePlan::upsample2(s[r - 2], s[r - 1])))
    }

    pub fn avg_pool2(&self) -> Self {
        let s = self.shape();
        let r = s.len();
        self.resample(&Arc::new(ResamplePlan::avg_pool2(s[r - 2], s[r - 1])))
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        Self::from_op(
            kernels::narrow(self.value(), axis, start, len),
            Op::Narrow(self.clone(), axis, start),
        )
    }

    fn pad_axis(&self, axis: usize, start: usize, total: usize) -> Self {
        Self::from_op(
            kernels::pad_axis(self.value(), axis, start, total),
            Op::PadAxis(self.clone(), axis, start),
        )
    }

    pub fn concat(xs: &[Self], axis: usize) -> Self {
        let vals: Vec<&Tensor<T>> = xs.iter().map(|x| x.value()).collect();
        Self::from_op(kernels::concat(&vals, axis), Op::Concat(xs.to_vec(), axis))
    }

    /// `(1 - alpha) * self + alpha * other`.
    pub fn lerp(&self, other: &Self, alpha: f64) -> Self {
        self.scale(1.0 - alpha).add(&other.scale(alpha))
    }

    /// Row-wise log-softmax of a `[n, k]` matrix.
    pub fn log_softmax(&self) -> Self {
        let k = self.shape()[1];
        let n = self.shape()[0];
        let d = self.value().data();
        let maxes: Vec<T> = (0..n)
            .map(|i| {
                d[i * k..(i + 1) * k]
                    .iter()
                    .copied()
                    .fold(T::neg_infinity(), T::max)
            })
            .collect();
        let shift = Self::constant(Tensor::new(&[n, 1], maxes));
        let z = self.sub(&shift);
        let lse = z.exp().sum_axes(&[1]).ln();
        z.sub(&lse)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $call:ident) => {
        impl<T: Float> std::ops::$trait<&Var<T>> for &Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: &Var<T>) -> Var<T> {
                self.$call(rhs)
            }
        }
    };
}
impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl<T: Float> std::ops::Neg for &Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        Var::neg(self)
    }
}

/// Parent gradients of one node, given the gradient flowing into it.
fn backward_rule<T: Float>(node: &Var<T>, gy: &Var<T>, create_graph: bool) -> Vec<(Var<T>, Var<T>)> {
    let op = node.0.op.as_ref().expect("backward through a leaf");
    let keep = |v: &Var<T>| if create_graph { v.clone() } else { v.detach() };
    let out = if create_graph { node.clone() } else { node.detach() };
    use Op::*;
    match op {
        Add(a, b) => vec![
            (a.clone(), gy.sum_to(a.shape())),
            (b.clone(), gy.sum_to(b.shape())),
        ],
        Sub(a, b) => vec![
            (a.clone(), gy.sum_to(a.shape())),
            (b.clone(), gy.neg().sum_to(b.shape())),
        ],
        Mul(a, b) => vec![
            (a.clone(), gy.mul(&keep(b)).sum_to(a.shape())),
            (b.clone(), gy.mul(&keep(a)).sum_to(b.shape())),
        ],
        Div(a, b) => {
            let bk = keep(b);
            vec![
                (a.clone(), gy.div(&bk).sum_to(a.shape())),
                (b.clone(), gy.mul(&out).div(&bk).neg().sum_to(b.shape())),
            ]
        }
        Neg(a) => vec![(a.clone(), gy.neg())],
        Scale(a, s) => vec![(a.clone(), gy.scale(*s))],
        AddScalar(a) => vec![(a.clone(), gy.clone())],
        LeakyRelu(a, slope) => {
            let sl = T::of(*slope);
            let mask = a
                .value()
                .map(|v| if v > T::zero() { T::one() } else { sl });
            vec![(a.clone(), gy.mul(&Var::constant(mask)))]
        }
        Sqrt(a) => vec![(a.clone(), gy.scale(0.5).div(&out))],
        Exp(a) => vec![(a.clone(), gy.mul(&out))],
        Log(a) => vec![(a.clone(), gy.div(&keep(a)))],
        SumTo(a) => vec![(a.clone(), gy.broadcast_to(a.shape()))],
        BroadcastTo(a) => vec![(a.clone(), gy.sum_to(a.shape()))],
        Reshape(a) => vec![(a.clone(), gy.reshape(a.shape()))],
        MatMul(a, b, ta, tb) => {
            let (ak, bk) = (keep(a), keep(b));
            let (ga, gb) = match (ta, tb) {
                (false, false) => (gy.matmul(&bk, false, true), ak.matmul(gy, true, false)),
                (true, false) => (bk.matmul(gy, false, true), ak.matmul(gy, false, false)),
                (false, true) => (gy.matmul(&bk, false, false), gy.matmul(&ak, true, false)),
                (true, true) => (bk.matmul(gy, true, true), gy.matmul(&ak, true, true)),
            };
            vec![(a.clone(), ga), (b.clone(), gb)]
        }
        Conv(x, w, g) => {
            let hw = (x.shape()[2], x.shape()[3]);
            vec![
                (x.clone(), Var::conv_input_grad(gy, &keep(w), *g, hw)),
                (w.clone(), Var::conv_weight_grad(&keep(x), gy, *g, w.shape()[2])),
            ]
        }
        ConvInputGrad(g0, w, g) => vec![
            (g0.clone(), gy.conv2d(&keep(w), g.stride, g.pad)),
            (w.clone(), Var::conv_weight_grad(gy, &keep(g0), *g, w.shape()[2])),
        ],
        ConvWeightGrad(x, g0, g) => {
            let hw = (x.shape()[2], x.shape()[3]);
            vec![
                (x.clone(), Var::conv_input_grad(&keep(g0), gy, *g, hw)),
                (g0.clone(), keep(x).conv2d(gy, g.stride, g.pad)),
            ]
        }
        Resample(a, plan) => vec![(a.clone(), gy.resample(&Arc::new(plan.transposed())))],
        Narrow(a, axis, start) => vec![(a.clone(), gy.pad_axis(*axis, *start, a.shape()[*axis]))],
        PadAxis(a, axis, start) => vec![(a.clone(), gy.narrow(*axis, *start, a.shape()[*axis]))],
        Concat(xs, axis) => {
            let mut offset = 0;
            xs.iter()
                .map(|x| {
                    let len = x.shape()[*axis];
                    let g = gy.narrow(*axis, offset, len);
                    offset += len;
                    (x.clone(), g)
                })
                .collect()
        }
    }
}

/// Gradients of `output` with respect to each of `inputs`, seeded with
/// `seed` (ones for a scalar output when `None`).
///
/// With `create_graph` the returned gradients are differentiable; otherwise
/// they are constants. Inputs that `output` does not depend on get `None`.
pub fn grad_with_seed<T: Float>(
    output: &Var<T>,
    seed: Option<&Tensor<T>>,
    inputs: &[&Var<T>],
    create_graph: bool,
) -> Vec<Option<Var<T>>> {
    let seed = match seed {
        Some(s) => {
            assert_eq!(s.shape(), output.shape(), "gradient seed shape mismatch");
            s.clone()
        }
        None => Tensor::ones(output.shape()),
    };
    if !output.requires_grad() {
        return vec![None; inputs.len()];
    }

    // collect the subgraph that requires grad
    let mut order: Vec<Var<T>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![output.clone()];
    while let Some(v) = stack.pop() {
        if !v.requires_grad() || !seen.insert(v.0.id) {
            continue;
        }
        if let Some(op) = &v.0.op {
            for p in op.parents() {
                stack.push(p.clone());
            }
        }
        order.push(v);
    }
    order.sort_by_key(|v| v.0.id);

    // keep only nodes with a path to one of the inputs
    let targets: HashSet<u64> = inputs.iter().map(|v| v.0.id).collect();
    let mut needed: HashSet<u64> = HashSet::new();
    for v in &order {
        let via_parent = v
            .0
            .op
            .as_ref()
            .is_some_and(|op| op.parents().iter().any(|p| needed.contains(&p.0.id)));
        if targets.contains(&v.0.id) || via_parent {
            needed.insert(v.0.id);
        }
    }

    let mut grads: HashMap<u64, Var<T>> = HashMap::new();
    grads.insert(output.0.id, Var::constant(seed));
    for v in order.iter().rev() {
        if !needed.contains(&v.0.id) || v.0.op.is_none() {
            continue;
        }
        let Some(gy) = grads.get(&v.0.id).cloned() else {
            continue;
        };
        if !targets.contains(&v.0.id) {
            grads.remove(&v.0.id);
        }
        for (parent, g) in backward_rule(v, &gy, create_graph) {
            if !needed.contains(&parent.0.id) {
                continue;
            }
            let g = if create_graph { g } else { g.detach() };
            let entry = grads.remove(&parent.0.id);
            let acc = match entry {
                Some(prev) => {
                    let s = prev.add(&g);
                    if create_graph {
                        s
                    } else {
                        s.detach()
                    }
                }
                None => g,
            };
            grads.insert(parent.0.id, acc);
        }
    }
    inputs.iter().map(|v| grads.get(&v.0.id).cloned()).collect()
}

/// Gradients of a scalar `output` with respect to `inputs`.
pub fn grad<T: Float>(output: &Var<T>, inputs: &[&Var<T>], create_graph: bool) -> Vec<Option<Var<T>>> {
    assert_eq!(
        output.value().numel(),
        1,
        "grad() needs a scalar output; use grad_with_seed"
    );
    grad_with_seed(output, None, inputs, create_graph)
}
