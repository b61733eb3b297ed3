use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as a non-PSD covariance.
pub const NEG_EIGEN_TOLERANCE: f64 = 1e-6;

/// Mean and unbiased covariance of a set of activation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl ActivationStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and unbiased covariance of an `n x d` activation matrix.
pub fn activation_stats(rows: &[Vec<f64>]) -> Result<ActivationStats> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 activation rows, got {n}")));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Shape(format!("activation rows of width {d} and {}", r.len())));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let mut centered = x;
    for j in 0..d {
        let m = mean[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(ActivationStats { mean, cov, n })
}

/// Eigen-decomposition based square root of a symmetric PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -NEG_EIGEN_TOLERANCE * scale {
            return Err(Error::Numerical(format!("{what} has eigenvalue {v}, not positive semidefinite")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Trace of the square root of a symmetric PSD matrix.
fn trace_sqrt(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    eig.eigenvalues.iter().try_fold(0.0, |acc, &v| {
        if v < -NEG_EIGEN_TOLERANCE * scale {
            Err(Error::Numerical(format!("{what} has eigenvalue {v}, not positive semidefinite")))
        } else {
            Ok(acc + v.max(0.0).sqrt())
        }
    })
}

/// Frechet distance between two Gaussians:
/// `|m_r - m_g|^2 + Tr(C_r) + Tr(C_g) - 2 Tr((C_r^1/2 C_g C_r^1/2)^1/2)`.
pub fn frechet_distance(real: &ActivationStats, generated: &ActivationStats) -> Result<f64> {
    if real.dim() != generated.dim() || real.cov.shape() != generated.cov.shape() {
        return Err(Error::Shape(format!(
            "activation dimensions {} and {} differ",
            real.dim(),
            generated.dim()
        )));
    }
    if real.mean == generated.mean && real.cov == generated.cov {
        return Ok(0.0);
    }
    let dm = (&real.mean - &generated.mean).norm_squared();
    let root = psd_sqrt(&real.cov, "real covariance")?;
    trace_sqrt(&generated.cov, "generated covariance")?;
    let inner = &root * &generated.cov * &root;
    let cross = trace_sqrt(&inner, "covariance product")?;
    Ok((dm + real.cov.trace() + generated.cov.trace() - 2.0 * cross).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(mean: Vec<f64>, cov: DMatrix<f64>) -> ActivationStats {
        ActivationStats {
            mean: DVector::from_vec(mean),
            cov,
            n: 10,
        }
    }

    #[test]
    fn hand_computed_stats() {
        let s = activation_stats(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.cov, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
        let s = activation_stats(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!((s.mean[0], s.cov[(0, 0)]), (1.0, 2.0));
        let s = activation_stats(&vec![vec![1.5, -2.0]; 4]).unwrap();
        assert!(s.cov.iter().all(|&v| v == 0.0));
        assert!(activation_stats(&[vec![1.0]]).is_err());
    }

    #[test]
    fn scalar_closed_form() {
        let a = stats(vec![0.0], DMatrix::from_element(1, 1, 1.0));
        let b = stats(vec![1.0], DMatrix::from_element(1, 1, 4.0));
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = stats(vec![0.0], DMatrix::from_element(1, 1, 1.0));
        let b = stats(vec![0.0, 0.0], DMatrix::identity(2, 2));
        assert!(frechet_distance(&a, &b).is_err());
        let neg = stats(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]));
        assert!(frechet_distance(&b, &neg).is_err());
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d + 2, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose()
    }

    #[test]
    fn diagonal_closed_form_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.gen_range(1..8);
            let cr: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..3.0)).collect();
            let cg: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..3.0)).collect();
            let mr: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mg: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect: f64 = (0..d)
                .map(|i| (cr[i].sqrt() - cg[i].sqrt()).powi(2) + (mr[i] - mg[i]).powi(2))
                .sum();
            let a = stats(mr, DMatrix::from_diagonal(&DVector::from_vec(cr)));
            let b = stats(mg, DMatrix::from_diagonal(&DVector::from_vec(cg)));
            assert!((frechet_distance(&a, &b).unwrap() - expect).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = stats((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(), random_psd(&mut rng, d));
            let b = stats((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(), random_psd(&mut rng, d));
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-8 * (1.0 + ab));
            prop_assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn stats_covariance_is_symmetric_psd(seed in any::<u64>(), n in 2usize..20, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let s = activation_stats(&rows).unwrap();
            prop_assert!((&s.cov - s.cov.transpose()).amax() <= 1e-10);
            let eig = SymmetricEigen::new(s.cov.clone());
            prop_assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-8));
        }
    }
}
