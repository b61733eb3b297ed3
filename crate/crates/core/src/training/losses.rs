use crate::autodiff::{grad, Float, Tensor, Var};
use crate::error::{Error, Result};

/// Keeps the gradient norm differentiable at zero.
const NORM_EPS: f64 = 1e-12;

/// `u_i * real_i + (1 - u_i) * fake_i` with one `u` per sample.
pub fn interpolate<T: Float>(real: &Tensor<T>, fake: &Tensor<T>, u: &[f64]) -> Result<Tensor<T>> {
    if real.shape() != fake.shape() || real.shape().first() != Some(&u.len()) {
        return Err(Error::Shape(format!(
            "real {:?}, fake {:?} and {} mixing weights",
            real.shape(),
            fake.shape(),
            u.len()
        )));
    }
    let inner = real.numel() / u.len().max(1);
    let data = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(i, (&r, &f))| {
            let a = T::of(u[i / inner]);
            a * r + (T::one() - a) * f
        })
        .collect();
    Ok(Tensor::new(real.shape(), data))
}

/// `lambda * mean_i (||grad_x D(x_i)||_2 - 1)^2` at the per-sample
/// interpolates between `real` and `fake`. The returned value stays
/// differentiable with respect to the critic's parameters.
pub fn gradient_penalty<T: Float, F>(critic: F, real: &Tensor<T>, fake: &Tensor<T>, u: &[f64], lambda: f64) -> Result<Var<T>>
where
    F: FnOnce(&Var<T>) -> Result<Var<T>>,
{
    let x_hat = Var::leaf(interpolate(real, fake, u)?);
    let scores = critic(&x_hat)?;
    let g = grad(&scores.sum_all(), &[&x_hat], true)
        .pop()
        .flatten()
        .ok_or_else(|| Error::Numerical("critic output does not depend on its input".into()))?;
    let axes: Vec<usize> = (1..g.shape().len()).collect();
    let norm = g.square().sum_axes(&axes).add_scalar(NORM_EPS).sqrt();
    Ok(norm.add_scalar(-1.0).square().mean_all().scale(lambda))
}

/// `mean(fake) - mean(real) + gp + drift_epsilon * mean(real^2)`.
pub fn discriminator_loss<T: Float>(real: &Var<T>, fake: &Var<T>, gp: &Var<T>, drift_epsilon: f64) -> Var<T> {
    fake.mean_all()
        .sub(&real.mean_all())
        .add(gp)
        .add(&drift_penalty(real, drift_epsilon))
}

/// `drift_epsilon * mean(real^2)`.
pub fn drift_penalty<T: Float>(real: &Var<T>, drift_epsilon: f64) -> Var<T> {
    real.square().mean_all().scale(drift_epsilon)
}

/// `-mean(fake)`.
pub fn generator_loss<T: Float>(fake: &Var<T>) -> Var<T> {
    fake.mean_all().neg()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, ParamGroup, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, v)
    }

    fn scalar(v: &Var<f64>) -> f64 {
        v.value().item()
    }

    #[test]
    fn linear_critics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let real = t(&[3, 1, 2, 2], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fake = t(&[3, 1, 2, 2], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let u = [0.1, 0.5, 0.9];
        let sum = |x: &Var<f64>| Ok(x.sum_axes(&[1, 2, 3]).reshape(&[3, 1]));
        let gp = gradient_penalty(sum, &real, &fake, &u, 10.0).unwrap();
        assert!((scalar(&gp) - 10.0 * (2.0f64 - 1.0).powi(2)).abs() < 1e-6);

        for w in [vec![0.5, -0.5, 0.5, -0.5], vec![3.0, 0.0, 4.0, 0.0], vec![0.1, 0.2, 0.3, 0.4]] {
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let wv = Var::constant(t(&[1, 1, 2, 2], w));
            let critic = |x: &Var<f64>| Ok(x.mul(&wv).sum_axes(&[1, 2, 3]).reshape(&[3, 1]));
            let gp = gradient_penalty(critic, &real, &fake, &u, 10.0).unwrap();
            assert!((scalar(&gp) - 10.0 * (norm - 1.0).powi(2)).abs() < 1e-6, "{norm}");
        }
        let constant = |_: &Var<f64>| Ok(Var::constant(Tensor::zeros(&[3, 1])));
        assert!(gradient_penalty(constant, &real, &fake, &u, 10.0).is_err());
    }

    #[test]
    fn interpolation_uses_one_weight_per_sample() {
        let real = t(&[2, 3], vec![1.0; 6]);
        let fake = t(&[2, 3], vec![0.0; 6]);
        let x = interpolate(&real, &fake, &[0.25, 0.75]).unwrap();
        assert_eq!(x.data(), &[0.25, 0.25, 0.25, 0.75, 0.75, 0.75]);
        assert!(interpolate(&real, &fake, &[0.5]).is_err());
    }

    #[test]
    fn penalty_parameter_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        let l1 = Dense::new(&mut store, "l1", 6, 5, 1.4, ParamGroup::Main, &mut rng);
        let l2 = Dense::new(&mut store, "l2", 5, 1, 1.0, ParamGroup::Main, &mut rng);
        for id in [l1.bias, l2.bias] {
            let shape = store.get(id).shape().to_vec();
            let v = (0..shape[0]).map(|_| rng.gen_range(-0.5..0.5)).collect();
            store.set(id, Tensor::new(&shape, v));
        }
        let real = t(&[4, 6], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fake = t(&[4, 6], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let u = [0.2, 0.4, 0.6, 0.8];
        let penalty = |s: &ParamStore<f64>, trainable: bool| {
            let p = s.bind(trainable);
            let critic = |x: &Var<f64>| Ok(l2.forward(&p, &l1.forward(&p, x).leaky_relu(0.2)));
            let gp = gradient_penalty(critic, &real, &fake, &u, 10.0).unwrap();
            (p, gp)
        };
        let (p, gp) = penalty(&store, true);
        let grads = p.grads(&gp);
        let h = 1e-6;
        let mut checked = 0;
        for (i, g) in grads.iter().enumerate() {
            // the output bias cannot influence an input gradient
            let g = g.clone().unwrap_or_else(|| Tensor::zeros(store.params()[i].value.shape()));
            for j in 0..g.numel() {
                let mut plus = store.clone();
                let mut v = plus.params()[i].value.to_vec();
                v[j] += h;
                plus.params_mut()[i].value = Tensor::new(g.shape(), v.clone());
                let mut minus = store.clone();
                v[j] -= 2.0 * h;
                minus.params_mut()[i].value = Tensor::new(g.shape(), v);
                let fd = (scalar(&penalty(&plus, false).1) - scalar(&penalty(&minus, false).1)) / (2.0 * h);
                let an = g.data()[j];
                assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-2), "param {i}[{j}]: {fd} vs {an}");
                checked += 1;
            }
        }
        assert_eq!(checked, 6 * 5 + 5 + 5 + 1);
    }

    #[test]
    fn loss_terms() {
        let c = |v: Vec<f64>| Var::constant(t(&[v.len(), 1], v));
        let zero = Var::constant(Tensor::scalar(0.0));
        let l = discriminator_loss(&c(vec![0.0, 0.0]), &c(vec![0.0, 0.0]), &zero, 0.001);
        assert_eq!(scalar(&l), 0.0);
        assert!((scalar(&drift_penalty(&c(vec![1.0, -1.0]), 0.001)) - 0.001).abs() < 1e-15);
        let lo = discriminator_loss(&c(vec![1.0, 2.0]), &c(vec![0.5, 0.5]), &zero, 0.0);
        let hi = discriminator_loss(&c(vec![1.0, 1.0]), &c(vec![0.5, 0.5]), &zero, 0.0);
        assert!(scalar(&lo) < scalar(&hi));
        assert_eq!(scalar(&generator_loss(&c(vec![0.0, 0.0]))), 0.0);
        assert_eq!(scalar(&generator_loss(&c(vec![2.0, 4.0]))), -3.0);
        assert!(scalar(&generator_loss(&c(vec![2.0, 4.1]))) < -3.0);
    }
}
