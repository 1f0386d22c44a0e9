//! Closed-form Monge map between Gaussians under squared Euclidean cost.

use nalgebra::SymmetricEigen;
use ndarray::{Array1, Array2, ArrayView2};

use crate::measures::{check_spd, from_dmatrix, to_dmatrix};
use crate::{OtError, Result};

const EIGEN_FLOOR: f64 = 1e-12;

/// `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: Array2<f64>,
    pub offset: Array1<f64>,
}

impl AffineMap {
    /// Apply to every row of `points`.
    pub fn apply(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.matrix.ncols() {
            return Err(OtError::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: points.ncols(),
            });
        }
        Ok(points.dot(&self.matrix.t()) + &self.offset)
    }
}

/// Symmetric matrix power `M^p` through the eigendecomposition, with
/// eigenvalues floored at `1e-12`.
fn sym_power(m: ArrayView2<f64>, p: f64) -> Array2<f64> {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let vals = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).powf(p));
    let q = &eig.eigenvectors;
    let out = q * nalgebra::DMatrix::from_diagonal(&vals) * q.transpose();
    let mut a = from_dmatrix(&out);
    symmetrize(&mut a);
    a
}

fn symmetrize(a: &mut Array2<f64>) {
    let d = a.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: ArrayView2<f64>) -> Array2<f64> {
    sym_power(m, 0.5)
}

/// Optimal affine map pushing `N(m1, s1)` onto `N(m2, s2)`:
/// `A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}`, `b = m2 − A m1`.
pub fn gaussian_monge_closed_form(m1: &Array1<f64>, s1: &Array2<f64>, m2: &Array1<f64>, s2: &Array2<f64>) -> Result<AffineMap> {
    let d = m1.len();
    if m2.len() != d || s1.dim() != (d, d) || s2.dim() != (d, d) {
        return Err(OtError::DimensionMismatch {
            expected: d,
            found: m2.len(),
        });
    }
    check_spd(s1.view(), "source covariance")?;
    check_spd(s2.view(), "target covariance")?;
    let root = sym_power(s1.view(), 0.5);
    let inv_root = sym_power(s1.view(), -0.5);
    let mut middle = root.dot(s2).dot(&root);
    symmetrize(&mut middle);
    let mut a = inv_root.dot(&sym_sqrt(middle.view())).dot(&inv_root);
    symmetrize(&mut a);
    let offset = m2 - &a.dot(m1);
    Ok(AffineMap { matrix: a, offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let g = Array2::from_shape_simple_fn((d, d), || rng.random::<f64>() * 2.0 - 1.0);
        g.dot(&g.t()) + Array2::<f64>::eye(d) * 0.2
    }

    #[test]
    fn identity_covariances_translate() {
        let i = Array2::<f64>::eye(2);
        let map = gaussian_monge_closed_form(&array![1.0, 2.0], &i, &array![-1.0, 0.5], &i).unwrap();
        for (a, b) in map.matrix.iter().zip(i.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(map.offset[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.offset[1], -1.5, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_ratio() {
        let map = gaussian_monge_closed_form(&array![0.0], &array![[4.0]], &array![3.0], &array![[9.0]]).unwrap();
        assert_abs_diff_eq!(map.matrix[[0, 0]], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(map.offset[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pushes_covariance_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let s1 = random_spd(3, &mut rng);
            let s2 = random_spd(3, &mut rng);
            let map = gaussian_monge_closed_form(&Array1::zeros(3), &s1, &Array1::zeros(3), &s2).unwrap();
            let pushed = map.matrix.dot(&s1).dot(&map.matrix);
            let err = (&pushed - &s2).mapv(|v| v * v).sum().sqrt();
            assert!(err <= 1e-8, "‖A S1 A − S2‖ = {err}");
            let eig = SymmetricEigen::new(to_dmatrix(map.matrix.view()));
            assert!(eig.eigenvalues.iter().all(|l| *l > 0.0));
        }
    }

    #[test]
    fn commuting_case() {
        let s1 = array![[2.0, 0.0], [0.0, 0.5]];
        let s2 = array![[1.0, 0.0], [0.0, 3.0]];
        let map = gaussian_monge_closed_form(&Array1::zeros(2), &s1, &Array1::zeros(2), &s2).unwrap();
        let expected = sym_sqrt(s2.view()).dot(&sym_power(s1.view(), -0.5));
        for (a, b) in map.matrix.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let bad = array![[1.0, 2.0], [2.0, 1.0]];
        let i = Array2::<f64>::eye(2);
        assert!(gaussian_monge_closed_form(&Array1::zeros(2), &bad, &Array1::zeros(2), &i).is_err());
    }
}
