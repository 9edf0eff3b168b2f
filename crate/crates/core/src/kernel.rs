//! Kernel functions and Gram matrices.

use std::fmt;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::scalar::Scalar;

/// Kernel descriptor.
///
/// `AnisotropicRbf` weights each axis with its own gamma, giving elliptical
/// level sets; with equal gammas it is the isotropic RBF.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel<T> {
    /// `exp(-gamma * |x - y|^2)`
    Rbf { gamma: T },
    /// `exp(-sum_a gamma_a * (x_a - y_a)^2)`
    AnisotropicRbf { gammas: Vec<T> },
    /// `(scale * <x, y> + offset)^degree`
    Polynomial { degree: u32, scale: T, offset: T },
}

impl<T: Scalar> Kernel<T> {
    pub fn rbf(gamma: T) -> Self {
        Kernel::Rbf { gamma }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Kernel::Rbf { gamma } if !(*gamma > T::zero()) || !gamma.is_finite() => {
                bad(format!("rbf gamma must be positive, got {gamma}"))
            }
            Kernel::AnisotropicRbf { gammas } if gammas.is_empty() => {
                bad("anisotropic rbf needs at least one gamma".into())
            }
            Kernel::AnisotropicRbf { gammas }
                if gammas.iter().any(|g| !(*g > T::zero()) || !g.is_finite()) =>
            {
                bad("every anisotropic gamma must be positive".into())
            }
            Kernel::Polynomial { degree, .. } if *degree < 1 => {
                bad("polynomial degree must be at least 1".into())
            }
            Kernel::Polynomial { scale, offset, .. }
                if !scale.is_finite() || !offset.is_finite() =>
            {
                bad("polynomial scale and offset must be finite".into())
            }
            _ => Ok(()),
        }
    }

    /// Required input dimension, if the kernel fixes one.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            Kernel::AnisotropicRbf { gammas } => Some(gammas.len()),
            _ => None,
        }
    }

    pub fn is_rbf(&self) -> bool {
        !matches!(self, Kernel::Polynomial { .. })
    }

    /// Evaluate without dimension checks; callers guarantee `x.len() == y.len()`.
    #[inline]
    pub fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        match self {
            Kernel::Rbf { gamma } => {
                let mut d2 = T::zero();
                for (a, b) in x.iter().zip(y) {
                    let d = *a - *b;
                    d2 += d * d;
                }
                (-*gamma * d2).exp()
            }
            Kernel::AnisotropicRbf { gammas } => {
                let mut s = T::zero();
                for ((a, b), g) in x.iter().zip(y).zip(gammas) {
                    let d = *a - *b;
                    s += *g * d * d;
                }
                (-s).exp()
            }
            Kernel::Polynomial {
                degree,
                scale,
                offset,
            } => {
                let mut dot = T::zero();
                for (a, b) in x.iter().zip(y) {
                    dot += *a * *b;
                }
                (*scale * dot + *offset).powi(*degree as i32)
            }
        }
    }

    pub fn check_dims(&self, x: &[T], y: &[T]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(d) = self.required_dim() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }
}

impl<T: Scalar> fmt::Display for Kernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
            Kernel::AnisotropicRbf { gammas } => {
                write!(f, "arbf(gammas=")?;
                for (i, g) in gammas.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ")")
            }
            Kernel::Polynomial {
                degree,
                scale,
                offset,
            } => write!(f, "poly(degree={degree}, scale={scale}, offset={offset})"),
        }
    }
}

pub fn kernel_eval<T: Scalar>(k: &Kernel<T>, x: &[T], y: &[T]) -> Result<T> {
    k.check_dims(x, y)?;
    Ok(k.eval_unchecked(x, y))
}

/// Dense symmetric kernel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Evaluate every pair once (`i <= j`) and mirror.
pub fn gram_matrix<T: Scalar>(k: &Kernel<T>, pts: &Features<T>) -> Result<GramMatrix<T>> {
    k.validate()?;
    if pts.is_empty() {
        return Err(Error::Dataset("gram matrix of an empty point set".into()));
    }
    if let Some(d) = k.required_dim() {
        if d != pts.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: pts.dim(),
            });
        }
    }
    let n = pts.len();
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let v = k.eval_unchecked(pts.row(i), pts.row(j));
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rbf_at_zero_distance_is_one() {
        for g in [0.01, 0.1, 5.0] {
            let k = Kernel::rbf(g);
            assert_eq!(kernel_eval(&k, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        }
    }

    #[test]
    fn rbf_unit_distance() {
        let v: f64 = kernel_eval(&Kernel::rbf(0.1), &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - 0.904_837_418_035_959_6).abs() < 1e-15);
    }

    #[test]
    fn polynomial_value() {
        let k = Kernel::Polynomial {
            degree: 2,
            scale: 0.5,
            offset: 1.0,
        };
        // 0.5 * (1*3 + 2*4) + 1 = 6.5, squared
        assert_eq!(kernel_eval(&k, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 42.25);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(kernel_eval(&Kernel::rbf(0.1), &[0.0], &[0.0, 1.0]).is_err());
        let a = Kernel::AnisotropicRbf {
            gammas: vec![0.1, 0.2],
        };
        assert!(kernel_eval(&a, &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn validation() {
        assert!(Kernel::rbf(0.0).validate().is_err());
        assert!(Kernel::AnisotropicRbf {
            gammas: vec![0.1, -1.0]
        }
        .validate()
        .is_err());
        assert!(Kernel::Polynomial {
            degree: 0,
            scale: 1.0,
            offset: 0.0
        }
        .validate()
        .is_err());
        assert!(Kernel::rbf(0.5).validate().is_ok());
    }

    #[test]
    fn gram_small_cases() {
        let k = Kernel::rbf(0.3);
        let one = Features::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(gram_matrix(&k, &one).unwrap().row(0), &[1.0]);
        let same = Features::from_rows(&[[1.0, 2.0]; 3]).unwrap();
        let g = gram_matrix(&k, &same).unwrap();
        assert!((0..3).all(|i| g.row(i).iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn gram_is_psd_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
            .collect();
        let pts = Features::from_rows(&rows).unwrap();
        for k in [
            Kernel::rbf(0.1),
            Kernel::rbf(2.0),
            Kernel::AnisotropicRbf {
                gammas: vec![0.05, 1.0],
            },
            Kernel::Polynomial {
                degree: 3,
                scale: 0.2,
                offset: 1.0,
            },
        ] {
            let g = gram_matrix(&k, &pts).unwrap();
            assert!(g.is_symmetric());
            let m = nalgebra::DMatrix::from_fn(10, 10, |i, j| g.get(i, j));
            let eig = m.symmetric_eigen().eigenvalues;
            let scale = eig.iter().cloned().fold(1.0, f64::max);
            assert!(eig.iter().all(|&l| l >= -1e-9 * scale), "{k}: {eig:?}");
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            x in proptest::array::uniform2(-10.0f64..10.0),
            y in proptest::array::uniform2(-10.0f64..10.0),
            g in 0.01f64..2.0,
        ) {
            for k in [
                Kernel::rbf(g),
                Kernel::AnisotropicRbf { gammas: vec![g, 2.0 * g] },
                Kernel::Polynomial { degree: 2, scale: g, offset: 1.0 },
            ] {
                prop_assert_eq!(k.eval_unchecked(&x, &y), k.eval_unchecked(&y, &x));
            }
            let v = Kernel::rbf(g).eval_unchecked(&x, &y);
            prop_assert!(v <= 1.0 && v >= 0.0);
            if x != y {
                prop_assert!(v < 1.0);
            }
        }

        #[test]
        fn equal_axis_gammas_reproduce_isotropic(
            x in proptest::array::uniform2(-10.0f64..10.0),
            y in proptest::array::uniform2(-10.0f64..10.0),
            g in 0.01f64..2.0,
        ) {
            let iso = Kernel::rbf(g).eval_unchecked(&x, &y);
            let an = Kernel::AnisotropicRbf { gammas: vec![g, g] }.eval_unchecked(&x, &y);
            prop_assert!((iso - an).abs() <= 1e-15);
        }

        #[test]
        fn rbf_is_monotone(
            d1 in 0.01f64..3.0,
            extra in 0.01f64..3.0,
            g in 0.05f64..1.0,
            dg in 0.01f64..1.0,
        ) {
            let k = Kernel::rbf(g);
            let near = k.eval_unchecked(&[0.0, 0.0], &[d1, 0.0]);
            let far = k.eval_unchecked(&[0.0, 0.0], &[d1 + extra, 0.0]);
            prop_assert!(far < near);
            let sharper = Kernel::rbf(g + dg).eval_unchecked(&[0.0, 0.0], &[d1, 0.0]);
            prop_assert!(sharper < near);
        }
    }
}
