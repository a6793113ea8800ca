//! Dense and iterative linear-algebra kernels shared across the crate.
//!
//! Everything here is deterministic: the Jacobi sweeps visit pivots in a
//! fixed order and the Lanczos start vector is a fixed analytic pattern, so
//! repeated runs produce bitwise-identical results.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by ascending eigenvalue;
/// eigenvectors are the columns of the returned matrix. O(n³) per sweep,
/// intended for desk-scale dense problems.
pub fn jacobi_eigh(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut m = a.to_owned();
    let mut v: Array2<f64> = Array2::eye(n);
    let max_sweeps = 64;

    for sweep in 0..=max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        if sweep == max_sweeps {
            return Err(Error::numerical(format!(
                "Jacobi eigensolver did not converge in {max_sweeps} sweeps (off-diagonal {off:e})"
            )));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[i, i]]
            .partial_cmp(&m[[j, j]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, new_col]] = v[[row, old_col]];
        }
    }
    Ok((values, vectors))
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fix eigenvector signs deterministically: the largest-magnitude entry of
/// each column is made positive (ties broken by lower row index).
pub fn fix_column_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via
/// eigendecomposition, zeroing eigenvalues below `cutoff` (relative to the
/// largest). Returns the pseudo-inverse and a condition estimate
/// λ_max / λ_min over the retained spectrum.
pub fn pinv_psd(a: ArrayView2<'_, f64>, cutoff: f64) -> Result<(Array2<f64>, f64)> {
    let (values, vectors) = jacobi_eigh(a)?;
    let n = values.len();
    let lmax = values.iter().cloned().fold(0.0, f64::max);
    if !lmax.is_finite() {
        return Err(Error::numerical("pseudo-inverse of non-finite matrix"));
    }
    let threshold = cutoff * lmax.max(1.0);
    let mut lmin_kept = f64::INFINITY;
    let mut inv_vals = Array1::zeros(n);
    for i in 0..n {
        if values[i] > threshold {
            inv_vals[i] = 1.0 / values[i];
            lmin_kept = lmin_kept.min(values[i]);
        }
    }
    let cond = if lmin_kept.is_finite() {
        lmax / lmin_kept
    } else {
        f64::INFINITY
    };
    // V diag(1/λ) Vᵀ
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x * inv_vals[j]);
    }
    Ok((scaled.dot(&vectors.t()), cond))
}

/// Which end of the spectrum Lanczos should resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumEnd {
    Largest,
    Smallest,
}

/// Extremal eigenpairs of a symmetric operator by Lanczos iteration with
/// full reorthogonalisation.
///
/// `matvec` applies the operator; `n` is its dimension; `k` eigenpairs from
/// the requested end are returned (ascending eigenvalue order for
/// `Smallest`, descending for `Largest`). The start vector is a fixed
/// analytic pattern, making the routine deterministic.
pub fn lanczos_extremal<F>(
    n: usize,
    k: usize,
    end: SpectrumEnd,
    max_steps: usize,
    mut matvec: F,
) -> Result<(Array1<f64>, Array2<f64>)>
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    if k == 0 || k > n {
        return Err(Error::invalid_param(format!(
            "requested {k} eigenpairs from an operator of dimension {n}"
        )));
    }
    let steps = max_steps.min(n).max(k + 2).min(n);

    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);

    let mut v = Array1::from_iter((0..n).map(|i| (0.7 + (i as f64 + 1.0).sin()) / (n as f64)));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);

    for step in 0..steps {
        let mut w = matvec(&v);
        let alpha = v.dot(&w);
        alphas.push(alpha);
        w = &w - &(&v * alpha);
        if step > 0 {
            let prev = &basis[step - 1];
            w = &w - &(prev * betas[step - 1]);
        }
        // Full reorthogonalisation keeps the basis numerically orthogonal.
        for b in &basis {
            let coeff = b.dot(&w);
            w = &w - &(b * coeff);
        }
        let coeff = v.dot(&w);
        w = &w - &(&v * coeff);
        basis.push(v.clone());

        let beta = w.dot(&w).sqrt();
        if beta <= 1e-13 || step + 1 == steps {
            break;
        }
        betas.push(beta);
        v = w.mapv(|x| x / beta);
    }

    let m = basis.len();
    let mut tri = Array2::zeros((m, m));
    for i in 0..m {
        tri[[i, i]] = alphas[i];
        if i + 1 < m {
            tri[[i, i + 1]] = betas[i];
            tri[[i + 1, i]] = betas[i];
        }
    }
    let (tvals, tvecs) = jacobi_eigh(tri.view())?;

    let indices: Vec<usize> = match end {
        SpectrumEnd::Smallest => (0..k.min(m)).collect(),
        SpectrumEnd::Largest => (0..k.min(m)).map(|i| m - 1 - i).collect(),
    };
    let mut values = Array1::zeros(indices.len());
    let mut vectors = Array2::zeros((n, indices.len()));
    for (out, &idx) in indices.iter().enumerate() {
        values[out] = tvals[idx];
        let mut col = Array1::<f64>::zeros(n);
        for (j, b) in basis.iter().enumerate() {
            let w = tvecs[[j, idx]];
            if w != 0.0 {
                col = &col + &(b * w);
            }
        }
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|x| x / norm);
        }
        vectors.column_mut(out).assign(&col);
    }
    Ok((values, vectors))
}

/// Residual RMS after optimally aligning `b` to `a` with a rigid motion
/// (translation plus orthogonal map, reflection allowed). Used by tests to
/// compare configurations that are only defined up to isometry.
pub fn procrustes_error(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let n = a.nrows() as f64;
    let ac = center_rows(a);
    let bc = center_rows(b);
    let m = bc.t().dot(&ac); // m×m cross-covariance
    // Orthogonal factor of the polar decomposition via eigendecompositions.
    let (vals, v) = jacobi_eigh(m.t().dot(&m).view())?;
    let dim = vals.len();
    let mut sigma_inv = Array2::zeros((dim, dim));
    for i in 0..dim {
        let s = vals[i].max(0.0).sqrt();
        sigma_inv[[i, i]] = if s > 1e-12 { 1.0 / s } else { 0.0 };
    }
    let u = m.dot(&v).dot(&sigma_inv);
    let r = u.dot(&v.t());
    let aligned = bc.dot(&r);
    let mut err = 0.0;
    for (x, y) in aligned.iter().zip(ac.iter()) {
        err += (x - y) * (x - y);
    }
    Ok((err / n).sqrt())
}

fn center_rows(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    let mean = out.mean_axis(ndarray::Axis(0)).unwrap();
    for mut row in out.rows_mut() {
        row -= &mean;
    }
    out
}
