//! Deterministic initialisations (PCA, spectral, Isomap) and the lift of a
//! Euclidean initialisation into a Randers space.
//!
//! Determinism matters here: every solver visits pivots in a fixed order and
//! eigenvector signs follow a fixed convention, so identical inputs produce
//! bitwise-identical embeddings.

use ndarray::{Array1, Array2};

use crate::dissim::{AsymDissimilarities, Symmetry};
use crate::error::{Error, Result};
use crate::geometry::RandersSpace;
use crate::graph::DataMatrix;
use crate::linalg::{fix_column_signs, jacobi_eigh, lanczos_extremal, SpectrumEnd};

/// N×m coordinates plus the space they live in (ω = 0 for Euclidean).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array2<f64>,
    pub space: RandersSpace,
}

impl Embedding {
    pub fn new(coords: Array2<f64>, space: RandersSpace) -> Result<Self> {
        if coords.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: coords.ncols(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_param("embedding has non-finite coordinates"));
        }
        Ok(Embedding { coords, space })
    }

    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Dense-solver size threshold; larger problems switch to Lanczos.
const DENSE_EIG_LIMIT: usize = 512;

/// Project centred data onto its top principal directions.
///
/// Sign convention: each component's largest-magnitude loading is positive.
/// Uses the n×n covariance when n ≤ N, otherwise the N×N Gram matrix.
pub fn pca_init(data: &DataMatrix, dim: usize) -> Result<Embedding> {
    let n_points = data.n_points();
    let n_dims = data.n_dims();
    if dim == 0 || dim > n_dims {
        return Err(Error::invalid_param(format!(
            "PCA dimension {dim} must lie in [1, {n_dims}]"
        )));
    }
    if n_points == 0 {
        return Err(Error::invalid_param("empty data"));
    }

    let mut centered = data.values().clone();
    let mean = centered.mean_axis(ndarray::Axis(0)).unwrap();
    for mut row in centered.rows_mut() {
        row -= &mean;
    }

    let coords = if n_dims <= n_points {
        let cov = centered.t().dot(&centered) / n_points as f64;
        let (_, mut components) = top_eigenpairs(&cov, dim)?;
        fix_column_signs(&mut components);
        centered.dot(&components)
    } else {
        // Gram trick: eigenvectors of X Xᵀ give the projections directly.
        let gram = centered.dot(&centered.t()) / n_points as f64;
        let (vals, vecs) = top_eigenpairs(&gram, dim)?;
        let mut coords = Array2::zeros((n_points, dim));
        for k in 0..dim {
            let u = vecs.column(k);
            // Recover the loading sign convention from the implied component.
            let mut component = centered.t().dot(&u);
            let norm = component.dot(&component).sqrt();
            if norm > 0.0 {
                component.mapv_inplace(|x| x / norm);
            }
            let mut best = 0;
            for i in 1..component.len() {
                if component[i].abs() > component[best].abs() {
                    best = i;
                }
            }
            let flip = if component[best] < 0.0 { -1.0 } else { 1.0 };
            let scale = (vals[k].max(0.0) * n_points as f64).sqrt();
            for i in 0..n_points {
                coords[[i, k]] = flip * scale * u[i];
            }
        }
        coords
    };

    Embedding::new(coords, RandersSpace::euclidean(dim))
}

/// Top-`dim` eigenpairs (descending eigenvalue) of a symmetric matrix,
/// dense below [`DENSE_EIG_LIMIT`], Lanczos above.
fn top_eigenpairs(m: &Array2<f64>, dim: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if n <= DENSE_EIG_LIMIT {
        let (vals, vecs) = jacobi_eigh(m.view())?;
        let mut out_vals = Array1::zeros(dim);
        let mut out_vecs = Array2::zeros((n, dim));
        for k in 0..dim {
            out_vals[k] = vals[n - 1 - k];
            out_vecs.column_mut(k).assign(&vecs.column(n - 1 - k));
        }
        Ok((out_vals, out_vecs))
    } else {
        let steps = (8 * dim + 120).min(n);
        lanczos_extremal(n, dim, SpectrumEnd::Largest, steps, |v| m.dot(v))
    }
}

/// Spectral initialisation from a symmetrised affinity matrix: rows of the
/// first nontrivial eigenvectors of the symmetric normalized Laplacian,
/// rescaled so the largest absolute coordinate is 10.
pub fn spectral_init(p: &AsymDissimilarities, dim: usize) -> Result<Embedding> {
    if p.symmetry() != Symmetry::Symmetric {
        return Err(Error::invalid_param(
            "spectral_init requires symmetrised affinities (apply symmetrise first)",
        ));
    }
    let n = p.n();
    if dim == 0 || dim + 1 > n {
        return Err(Error::invalid_param(format!(
            "spectral dimension {dim} too large for {n} nodes"
        )));
    }

    let mut degree = vec![0.0f64; n];
    for (i, _, w) in p.iter_entries() {
        degree[i] += w;
    }
    let components = affinity_components(p);
    let n_components = components.iter().max().map(|&c| c + 1).unwrap_or(0);
    if n_components > 1 {
        return Err(Error::Disconnected {
            components: n_components,
        });
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / d.sqrt()).collect();

    let vectors = if n <= DENSE_EIG_LIMIT {
        // Dense symmetric normalized Laplacian L = I − D^{-1/2} W D^{-1/2}.
        let mut lap = Array2::zeros((n, n));
        for i in 0..n {
            lap[[i, i]] = 1.0;
        }
        for (i, j, w) in p.iter_entries() {
            lap[[i, j]] -= w * inv_sqrt[i] * inv_sqrt[j];
        }
        let (_, vecs) = jacobi_eigh(lap.view())?;
        let mut out = Array2::zeros((n, dim));
        for k in 0..dim {
            out.column_mut(k).assign(&vecs.column(k + 1));
        }
        out
    } else {
        // Lanczos on 2I − L (largest end), then skip the trivial eigenvector.
        let rows: Vec<&[(usize, f64)]> = (0..n).map(|i| p.row(i)).collect();
        let matvec = |v: &Array1<f64>| {
            let mut out = Array1::zeros(n);
            for i in 0..n {
                let mut acc = v[i]; // (2I − L) v = v + D^{-1/2} W D^{-1/2} v
                for &(j, w) in rows[i] {
                    acc += w * inv_sqrt[i] * inv_sqrt[j] * v[j];
                }
                out[i] = acc;
            }
            out
        };
        let steps = (8 * (dim + 1) + 200).min(n);
        let (_, vecs) = lanczos_extremal(n, dim + 1, SpectrumEnd::Largest, steps, matvec)?;
        let mut out = Array2::zeros((n, dim));
        for k in 0..dim {
            out.column_mut(k).assign(&vecs.column(k + 1));
        }
        out
    };

    let mut coords = vectors;
    fix_column_signs(&mut coords);
    let max_abs = coords.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if max_abs > 0.0 {
        coords.mapv_inplace(|x| x * 10.0 / max_abs);
    }
    Embedding::new(coords, RandersSpace::euclidean(dim))
}

fn affinity_components(p: &AsymDissimilarities) -> Vec<usize> {
    let n = p.n();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(node) = stack.pop() {
            for &(j, _) in p.row(node) {
                if comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Classical MDS on a symmetric distance matrix: double-centre the squared
/// distances and take the top eigenvectors scaled by √eigenvalue. Negative
/// eigenvalues contribute zero columns.
pub fn isomap_embed(distances: &Array2<f64>, dim: usize) -> Result<Embedding> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: distances.ncols(),
        });
    }
    if dim == 0 || dim > n {
        return Err(Error::invalid_param(format!(
            "embedding dimension {dim} must lie in [1, {n}]"
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let d = distances[[i, j]];
            if !d.is_finite() {
                return Err(Error::invalid_param(format!(
                    "distance ({i}, {j}) is not finite; the graph was not fully connected"
                )));
            }
            let r = distances[[j, i]];
            if (d - r).abs() > 1e-9 * (1.0 + d.abs()) {
                return Err(Error::invalid_param(format!(
                    "distance matrix is asymmetric at ({i}, {j}): {d} vs {r}; symmetrise first"
                )));
            }
        }
    }

    // G = −½ J D⁽²⁾ J with J the centering projector.
    let mut sq = distances.mapv(|d| d * d);
    let row_mean = sq.mean_axis(ndarray::Axis(1)).unwrap();
    let col_mean = sq.mean_axis(ndarray::Axis(0)).unwrap();
    let total_mean = sq.mean().unwrap();
    for i in 0..n {
        for j in 0..n {
            sq[[i, j]] = -0.5 * (sq[[i, j]] - row_mean[i] - col_mean[j] + total_mean);
        }
    }

    let (vals, mut vecs) = top_eigenpairs(&sq, dim)?;
    fix_column_signs(&mut vecs);
    let mut coords = Array2::zeros((n, dim));
    for k in 0..dim {
        let scale = vals[k].max(0.0).sqrt();
        for i in 0..n {
            coords[[i, k]] = scale * vecs[[i, k]];
        }
    }
    Embedding::new(coords, RandersSpace::euclidean(dim))
}

/// Lift a Euclidean embedding into a Randers space one dimension up: append
/// a zero coordinate, then rotate so the new axis aligns with ω.
pub fn finsler_lift(base: &Embedding, space: &RandersSpace) -> Result<Embedding> {
    if !base.space.is_euclidean() {
        return Err(Error::invalid_param("finsler_lift expects a Euclidean base"));
    }
    if space.dim() != base.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: base.dim() + 1,
            got: space.dim(),
        });
    }
    space.validate()?;
    let omega_norm = space.omega_norm();
    if omega_norm == 0.0 {
        return Err(Error::invalid_param(
            "finsler_lift needs ω ≠ 0 to define the asymmetry axis",
        ));
    }
    let n = base.n_points();
    let m = space.dim();
    let mut lifted = Array2::zeros((n, m));
    lifted
        .slice_mut(ndarray::s![.., ..m - 1])
        .assign(&base.coords);

    let u = space.omega().mapv(|w| w / omega_norm);
    // Householder reflection sending e_m to u (identity when they coincide).
    let mut v = u.mapv(|x| -x);
    v[m - 1] += 1.0;
    let vnorm_sq = v.dot(&v);
    let coords = if vnorm_sq <= 1e-30 {
        lifted
    } else {
        // y ← y − 2 (y·v)/(v·v) v, applied row-wise.
        let scale = 2.0 / vnorm_sq;
        let proj = lifted.dot(&v);
        let mut out = lifted;
        for i in 0..n {
            let c = scale * proj[i];
            for k in 0..m {
                out[[i, k]] -= c * v[k];
            }
        }
        out
    };
    Embedding::new(coords, space.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissim::Normalization;
    use crate::linalg::procrustes_error;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn data(values: Array2<f64>) -> DataMatrix {
        DataMatrix::new(values).unwrap()
    }

    #[test]
    fn pca_identity_on_axis_aligned_data() {
        // Centered, axis-aligned, variance (4, 1): PCA returns the data
        // itself up to the sign convention.
        let d = data(array![[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let e = pca_init(&d, 2).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert!((e.coords[[i, j]].abs() - d.values()[[i, j]].abs()).abs() < 1e-10);
            }
        }
        assert!((e.coords[[0, 0]] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn pca_rank_one_gives_zero_second_column() {
        let d = data(array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [-1.0, -2.0]]);
        let e = pca_init(&d, 2).unwrap();
        for i in 0..4 {
            assert!(e.coords[[i, 1]].abs() < 1e-9);
        }
    }

    #[test]
    fn pca_reconstruction_matches_power_iteration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = Array2::from_shape_fn((20, 5), |_| rng.gen_range(-1.0..1.0));
        let d = data(raw.clone());
        let e = pca_init(&d, 2).unwrap();

        // Oracle: covariance eigenvalues by power iteration with deflation.
        let mut centered = raw;
        let mean = centered.mean_axis(ndarray::Axis(0)).unwrap();
        for mut row in centered.rows_mut() {
            row -= &mean;
        }
        let mut cov = centered.t().dot(&centered) / 20.0;
        let mut eigvals = Vec::new();
        for _ in 0..5 {
            let mut v = Array1::from_elem(5, 1.0 / (5f64).sqrt());
            let mut lambda = 0.0;
            for _ in 0..10_000 {
                let w = cov.dot(&v);
                lambda = v.dot(&w);
                let norm = w.dot(&w).sqrt();
                if norm < 1e-300 {
                    break;
                }
                v = w.mapv(|x| x / norm);
            }
            eigvals.push(lambda);
            for i in 0..5 {
                for j in 0..5 {
                    cov[[i, j]] -= lambda * v[i] * v[j];
                }
            }
        }
        // Residual variance after projecting onto 2 components equals the
        // sum of the trailing eigenvalues.
        let proj_var: f64 = e.coords.iter().map(|x| x * x).sum::<f64>() / 20.0;
        let total_var: f64 = centered.iter().map(|x| x * x).sum::<f64>() / 20.0;
        let expected_resid: f64 = eigvals[2..].iter().sum();
        assert!(
            ((total_var - proj_var) - expected_resid).abs() < 1e-8,
            "residual {} vs oracle {}",
            total_var - proj_var,
            expected_resid
        );
    }

    #[test]
    fn pca_rejects_oversized_dim() {
        let d = data(array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(pca_init(&d, 3).is_err());
    }

    #[test]
    fn pca_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = Array2::from_shape_fn((15, 4), |_| rng.gen_range(-1.0..1.0));
        let a = pca_init(&data(raw.clone()), 2).unwrap();
        let b = pca_init(&data(raw), 2).unwrap();
        assert_eq!(a.coords, b.coords);
    }

    fn affinity(n: usize, edges: &[(usize, usize, f64)]) -> AsymDissimilarities {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        AsymDissimilarities::new(n, rows, Normalization::None, Symmetry::Symmetric).unwrap()
    }

    #[test]
    fn spectral_disconnected_errors() {
        let p = affinity(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(matches!(
            spectral_init(&p, 1),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn spectral_four_cycle_is_square() {
        let p = affinity(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]);
        let e = spectral_init(&p, 2).unwrap();
        // The nontrivial eigenvectors of the 4-cycle Laplacian place the
        // nodes at the four axis points of a square, up to rotation/sign:
        // all corners equidistant from the origin, adjacent corners
        // orthogonal, opposite corners antipodal.
        let norms: Vec<f64> = (0..4)
            .map(|i| e.coords.row(i).dot(&e.coords.row(i)).sqrt())
            .collect();
        for w in norms.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-8);
        }
        for i in 0..4 {
            let j = (i + 1) % 4;
            let dot = e.coords.row(i).dot(&e.coords.row(j));
            assert!(dot.abs() < 1e-8, "adjacent corners not orthogonal: {dot}");
        }
        for i in 0..2 {
            let opp = e.coords.row(i + 2);
            for k in 0..2 {
                assert!((e.coords[[i, k]] + opp[k]).abs() < 1e-8);
            }
        }
        let max_abs = e.coords.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!((max_abs - 10.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_path_second_eigenvector_monotone() {
        let p = affinity(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let e = spectral_init(&p, 1).unwrap();
        let xs: Vec<f64> = (0..3).map(|i| e.coords[[i, 0]]).collect();
        assert!(
            (xs[0] < xs[1] && xs[1] < xs[2]) || (xs[0] > xs[1] && xs[1] > xs[2]),
            "not monotone: {xs:?}"
        );
    }

    #[test]
    fn isomap_recovers_planar_configuration() {
        let pts: Array2<f64> = array![[0.0, 0.0], [1.0, 0.0], [0.3, 1.2], [-0.7, 0.4]];
        let n = 4;
        let mut d = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let diff = &pts.row(i) - &pts.row(j);
                d[[i, j]] = diff.dot(&diff).sqrt();
            }
        }
        let e = isomap_embed(&d, 2).unwrap();
        let err = procrustes_error(pts.view(), e.coords.view()).unwrap();
        assert!(err < 1e-8, "procrustes error {err}");
    }

    #[test]
    fn isomap_equilateral_from_equal_distances() {
        let d = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let e = isomap_embed(&d, 2).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let diff = &e.coords.row(i) - &e.coords.row(j);
                let dist = diff.dot(&diff).sqrt();
                assert!((dist - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isomap_dim_one_preserves_order() {
        let xs = [0.0f64, 1.0, 4.0, 9.0];
        let n = 4;
        let mut d = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                d[[i, j]] = (xs[i] - xs[j]).abs();
            }
        }
        let e = isomap_embed(&d, 1).unwrap();
        let ys: Vec<f64> = (0..n).map(|i| e.coords[[i, 0]]).collect();
        let increasing = ys.windows(2).all(|w| w[0] < w[1]);
        let decreasing = ys.windows(2).all(|w| w[0] > w[1]);
        assert!(increasing || decreasing, "order broken: {ys:?}");
        for i in 0..n {
            for j in 0..n {
                assert!(((ys[i] - ys[j]).abs() - d[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn isomap_rejects_asymmetric_input() {
        let d = array![[0.0, 1.0], [2.0, 0.0]];
        assert!(isomap_embed(&d, 1).is_err());
    }

    #[test]
    fn lift_with_omega_on_last_axis_appends_zeros() {
        let base = Embedding::new(array![[1.0], [2.0]], RandersSpace::euclidean(1)).unwrap();
        let space = RandersSpace::new(2, array![0.0, 0.5]).unwrap();
        let lifted = finsler_lift(&base, &space).unwrap();
        assert_eq!(lifted.coords, array![[1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(lifted.space, space);
    }

    #[test]
    fn lift_rotates_axis_to_omega() {
        let base = Embedding::new(array![[1.0], [2.0]], RandersSpace::euclidean(1)).unwrap();
        let space = RandersSpace::new(2, array![0.5, 0.0]).unwrap();
        let lifted = finsler_lift(&base, &space).unwrap();
        // Oracle: explicit Householder H = I − 2vvᵀ/‖v‖² with v = e₂ − e₁.
        let h = {
            let v = array![-1.0, 1.0];
            let mut h = Array2::eye(2);
            let scale = 2.0 / v.dot(&v);
            for i in 0..2 {
                for j in 0..2 {
                    h[[i, j]] -= scale * v[i] * v[j];
                }
            }
            h
        };
        let expect = array![[1.0, 0.0], [2.0, 0.0]].dot(&h.t());
        for (a, b) in lifted.coords.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // The appended axis maps onto the ω direction.
        let he2 = h.dot(&array![0.0, 1.0]);
        assert!((he2[0] - 1.0).abs() < 1e-12 && he2[1].abs() < 1e-12);
    }

    #[test]
    fn lift_then_project_recovers_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let coords = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-2.0..2.0));
        let base = Embedding::new(coords.clone(), RandersSpace::euclidean(2)).unwrap();
        let omega = array![0.3, -0.2, 0.4];
        let space = RandersSpace::new(3, omega.clone()).unwrap();
        let lifted = finsler_lift(&base, &space).unwrap();
        // The base plane maps into ω⊥ and within-configuration distances
        // are preserved by the rotation.
        let u = omega.mapv(|w| w / space.omega_norm());
        for i in 0..6 {
            let along = lifted.coords.row(i).dot(&u);
            assert!(along.abs() < 1e-12);
        }
        for i in 0..6 {
            for j in 0..6 {
                let a = &lifted.coords.row(i) - &lifted.coords.row(j);
                let b = &coords.row(i) - &coords.row(j);
                assert!((a.dot(&a).sqrt() - b.dot(&b).sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lift_rejects_zero_omega() {
        let base = Embedding::new(array![[1.0]], RandersSpace::euclidean(1)).unwrap();
        let space = RandersSpace::euclidean(2);
        assert!(finsler_lift(&base, &space).is_err());
    }
}
