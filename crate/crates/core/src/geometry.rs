//! The canonical Randers space: its distance, gradients, and validity checks.
//!
//! The space is ℝ^m equipped with `d(x, y) = ‖y − x‖₂ + ω⊤(y − x)` for a
//! constant drift vector ω with ‖ω‖₂ < 1. Geodesics are straight segments,
//! but lengths depend on traversal direction; ω = 0 recovers Euclidean space.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance floor below which a pair of points is treated as coincident.
///
/// Gradients raise [`Error::DegeneratePair`] at the API level; iterative
/// embedders clamp the norm to this value instead and keep moving.
pub const EPS_DIST: f64 = 1e-12;

/// Embedding-space descriptor: dimension m and drift vector ω (‖ω‖₂ < 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandersSpace {
    dim: usize,
    omega: Array1<f64>,
}

impl RandersSpace {
    /// Create a space with an explicit drift vector.
    pub fn new(dim: usize, omega: Array1<f64>) -> Result<Self> {
        if omega.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: omega.len(),
            });
        }
        let space = RandersSpace { dim, omega };
        space.validate()?;
        Ok(space)
    }

    /// The Euclidean special case ω = 0.
    pub fn euclidean(dim: usize) -> Self {
        RandersSpace {
            dim,
            omega: Array1::zeros(dim),
        }
    }

    /// Drift of the given magnitude along the last axis, the canonical choice.
    pub fn along_last_axis(dim: usize, magnitude: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid_param("dimension must be positive"));
        }
        let mut omega = Array1::zeros(dim);
        omega[dim - 1] = magnitude;
        RandersSpace::new(dim, omega)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> ArrayView1<'_, f64> {
        self.omega.view()
    }

    pub fn omega_norm(&self) -> f64 {
        self.omega.dot(&self.omega).sqrt()
    }

    pub fn is_euclidean(&self) -> bool {
        self.omega.iter().all(|&w| w == 0.0)
    }

    /// Returns normally iff ‖ω‖₂ < 1 (strict) and all entries are finite.
    pub fn validate(&self) -> Result<()> {
        if self.omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid_param("drift vector has non-finite entries"));
        }
        let norm = self.omega_norm();
        if norm >= 1.0 {
            return Err(Error::InvalidDrift { norm });
        }
        Ok(())
    }

    fn check_dim(&self, v: ArrayView1<'_, f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Randers distance `d(x, y) = ‖y − x‖₂ + ω⊤(y − x)`.
///
/// Satisfies `d(x, y) + d(y, x) = 2‖y − x‖₂` and
/// `d(x, y) ≥ (1 − ‖ω‖₂)‖y − x‖₂ ≥ 0`.
pub fn randers_distance(
    space: &RandersSpace,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<f64> {
    space.check_dim(x)?;
    space.check_dim(y)?;
    Ok(randers_distance_unchecked(space, x, y))
}

/// Distance without dimension checks, for hot loops that already validated shapes.
#[inline]
pub(crate) fn randers_distance_unchecked(
    space: &RandersSpace,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> f64 {
    let mut sq = 0.0;
    let mut drift = 0.0;
    for i in 0..x.len() {
        let d = y[i] - x[i];
        sq += d * d;
        drift += space.omega[i] * d;
    }
    sq.sqrt() + drift
}

/// Gradients of the Randers distance with respect to both endpoints.
///
/// `grad_x = (x − y)/‖y − x‖₂ − ω` and `grad_y = (y − x)/‖y − x‖₂ + ω`,
/// so `grad_x = −grad_y` exactly. Errors with [`Error::DegeneratePair`]
/// when the pair is closer than [`EPS_DIST`].
pub fn randers_distance_grad(
    space: &RandersSpace,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    space.check_dim(x)?;
    space.check_dim(y)?;
    let diff = &y.to_owned() - &x;
    let norm = diff.dot(&diff).sqrt();
    if norm <= EPS_DIST {
        return Err(Error::DegeneratePair { dist: norm });
    }
    let grad_y = &diff / norm + &space.omega;
    let grad_x = grad_y.mapv(|g| -g);
    Ok((grad_x, grad_y))
}

/// Check that a space descriptor is valid (free-function form of [`RandersSpace::validate`]).
pub fn validate_space(space: &RandersSpace) -> Result<()> {
    space.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, dim: usize) -> Array1<f64> {
        Array1::from_iter((0..dim).map(|_| rng.gen_range(-3.0..3.0)))
    }

    fn random_drift(rng: &mut impl Rng, dim: usize, norm: f64) -> Array1<f64> {
        let mut v = random_point(rng, dim);
        let n = v.dot(&v).sqrt();
        if n > 0.0 {
            v.mapv_inplace(|x| x * norm / n);
        }
        v
    }

    #[test]
    fn euclidean_special_case() {
        let space = RandersSpace::euclidean(2);
        let d = randers_distance(&space, array![0.0, 0.0].view(), array![3.0, 4.0].view()).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn drift_shifts_distance_by_direction() {
        let space = RandersSpace::new(2, array![0.0, 0.6]).unwrap();
        let x = array![0.0, 0.0];
        let y = array![3.0, 4.0];
        let fwd = randers_distance(&space, x.view(), y.view()).unwrap();
        let rev = randers_distance(&space, y.view(), x.view()).unwrap();
        assert!((fwd - 7.4).abs() < 1e-12);
        assert!((rev - 2.6).abs() < 1e-12);
        assert!((fwd + rev - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let space = RandersSpace::euclidean(2);
        let err = randers_distance(&space, array![0.0].view(), array![1.0, 2.0].view());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn triangle_inequality_under_strong_drift() {
        // Brute-force sampling oracle: the Randers metric is a (possibly
        // asymmetric) metric whenever ‖ω‖₂ < 1.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let dim = rng.gen_range(2..=4);
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, 0.9)).unwrap();
            let x = random_point(&mut rng, dim);
            let y = random_point(&mut rng, dim);
            let z = random_point(&mut rng, dim);
            let xz = randers_distance(&space, x.view(), z.view()).unwrap();
            let xy = randers_distance(&space, x.view(), y.view()).unwrap();
            let yz = randers_distance(&space, y.view(), z.view()).unwrap();
            assert!(xz <= xy + yz + 1e-12, "triangle violated: {xz} > {xy} + {yz}");
        }
    }

    #[test]
    fn reversibility_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dim = rng.gen_range(1..=5);
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, 0.7)).unwrap();
            let x = random_point(&mut rng, dim);
            let y = random_point(&mut rng, dim);
            let fwd = randers_distance(&space, x.view(), y.view()).unwrap();
            let rev = randers_distance(&space, y.view(), x.view()).unwrap();
            let diff = &y - &x;
            let twice = 2.0 * diff.dot(&diff).sqrt();
            assert!((fwd + rev - twice).abs() <= 1e-12 * (1.0 + twice));
        }
    }

    #[test]
    fn positive_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let dim = rng.gen_range(1..=5);
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, 0.5)).unwrap();
            let x = random_point(&mut rng, dim);
            let u = random_point(&mut rng, dim);
            let lambda = rng.gen_range(0.1..5.0);
            let unit = randers_distance(&space, x.view(), (&x + &u).view()).unwrap();
            let scaled = randers_distance(&space, x.view(), (&x + &(&u * lambda)).view()).unwrap();
            assert!((scaled - lambda * unit).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn lower_bound_and_identity_of_indiscernibles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let dim = rng.gen_range(1..=4);
            let omega_norm = rng.gen_range(0.0..0.95);
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, omega_norm)).unwrap();
            let x = random_point(&mut rng, dim);
            let y = random_point(&mut rng, dim);
            let d = randers_distance(&space, x.view(), y.view()).unwrap();
            let diff = &y - &x;
            let eucl = diff.dot(&diff).sqrt();
            assert!(d >= (1.0 - space.omega_norm()) * eucl - 1e-12);
            let self_d = randers_distance(&space, x.view(), x.view()).unwrap();
            assert_eq!(self_d, 0.0);
        }
    }

    #[test]
    fn gradient_plain_cases() {
        let space = RandersSpace::euclidean(2);
        let (gx, gy) =
            randers_distance_grad(&space, array![0.0, 0.0].view(), array![1.0, 0.0].view())
                .unwrap();
        assert_eq!(gy, array![1.0, 0.0]);
        assert_eq!(gx, array![-1.0, 0.0]);

        let space = RandersSpace::new(3, array![0.0, 0.0, 0.5]).unwrap();
        let (gx, gy) = randers_distance_grad(
            &space,
            array![0.0, 0.0, 0.0].view(),
            array![0.0, 0.0, 1.0].view(),
        )
        .unwrap();
        assert_eq!(gy, array![0.0, 0.0, 1.5]);
        assert_eq!(gx, array![0.0, 0.0, -1.5]);
    }

    #[test]
    fn gradient_antisymmetry_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..500 {
            let dim = rng.gen_range(1..=4);
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, 0.8)).unwrap();
            let x = random_point(&mut rng, dim);
            let y = random_point(&mut rng, dim);
            if (&y - &x).dot(&(&y - &x)).sqrt() <= EPS_DIST {
                continue;
            }
            let (gx, gy) = randers_distance_grad(&space, x.view(), y.view()).unwrap();
            for i in 0..dim {
                assert_eq!(gx[i], -gy[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for _ in 0..100 {
            let dim = rng.gen_range(2..=3);
            let norm = [0.0, 0.3, 0.9][rng.gen_range(0..3)];
            let space = RandersSpace::new(dim, random_drift(&mut rng, dim, norm)).unwrap();
            let x = random_point(&mut rng, dim);
            let mut y = random_point(&mut rng, dim);
            while (&y - &x).dot(&(&y - &x)).sqrt() < 0.1 {
                y = random_point(&mut rng, dim);
            }
            let (gx, gy) = randers_distance_grad(&space, x.view(), y.view()).unwrap();
            for i in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd_x = (randers_distance(&space, xp.view(), y.view()).unwrap()
                    - randers_distance(&space, xm.view(), y.view()).unwrap())
                    / (2.0 * h);
                let denom = gx[i].abs().max(1e-3);
                assert!((gx[i] - fd_x).abs() / denom <= 1e-5);

                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += h;
                ym[i] -= h;
                let fd_y = (randers_distance(&space, x.view(), yp.view()).unwrap()
                    - randers_distance(&space, x.view(), ym.view()).unwrap())
                    / (2.0 * h);
                let denom = gy[i].abs().max(1e-3);
                assert!((gy[i] - fd_y).abs() / denom <= 1e-5);
            }
        }
    }

    #[test]
    fn coincident_points_rejected() {
        let space = RandersSpace::euclidean(2);
        let p = array![1.0, 2.0];
        let err = randers_distance_grad(&space, p.view(), p.view());
        assert!(matches!(err, Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn validate_space_boundary() {
        assert!(RandersSpace::new(2, array![0.5, 0.0]).is_ok());
        assert!(matches!(
            RandersSpace::new(2, array![1.0, 0.0]),
            Err(Error::InvalidDrift { .. })
        ));
        assert!(RandersSpace::new(2, array![0.0, 0.0]).is_ok());
        assert!(RandersSpace::along_last_axis(3, 0.1).is_ok());
        assert!(RandersSpace::along_last_axis(3, 1.0).is_err());
    }
}
