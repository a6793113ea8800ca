//! t-SNE with the corrected ν-degrees-of-freedom gradient, the published
//! (incorrect) gradient kept for regression comparison, and the Randers-space
//! generalisation.
//!
//! The widely copied update rule for t-SNE with ν degrees of freedom carries
//! a wrong exponent: the kernel factor in the gradient must be
//! `(1 + d²/ν)⁻¹`, not `(1 + d²/ν)^{−(ν+1)/2}`. The two coincide only at
//! ν = 1, which is why the bug goes unnoticed in 2-D embeddings.
//! [`tsne_grad_fixed`] implements the correct rule, [`tsne_grad_legacy`] the
//! published one; the finite-difference tests tell them apart at ν ≠ 1.

use ndarray::Array2;

use crate::dissim::{AsymDissimilarities, Normalization};
use crate::error::{Error, Result};
use crate::geometry::{randers_distance_unchecked, RandersSpace, EPS_DIST};
use crate::init::Embedding;

/// Floor applied to q entries before taking logarithms.
pub const Q_FLOOR: f64 = 1e-12;

/// Optimiser settings for [`run_tsne`].
#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    /// Student kernel degrees of freedom; `None` means max(m − 1, 1).
    pub nu: Option<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Momentum before and after the switch epoch.
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch: usize,
    /// Factor applied to p during the first `exaggeration_epochs` epochs.
    pub early_exaggeration: f64,
    pub exaggeration_epochs: usize,
    pub seed: u64,
    /// Disable momentum and exaggeration: plain gradient descent with a
    /// fixed step, used by the monotonicity property test.
    pub plain_gd: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            nu: None,
            epochs: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch: 250,
            early_exaggeration: 12.0,
            exaggeration_epochs: 250,
            seed: 0,
            plain_gd: false,
        }
    }
}

impl TsneConfig {
    pub fn resolve_nu(&self, dim: usize) -> f64 {
        self.nu.unwrap_or(((dim as f64) - 1.0).max(1.0))
    }
}

/// Student kernel `(1 + d²/ν)^{−(ν+1)/2}` over a distance matrix, globally
/// normalised. Returns (q, Z) with the floor applied after normalisation.
fn student_q(dists: &Array2<f64>, nu: f64) -> (Array2<f64>, f64) {
    let n = dists.nrows();
    let exponent = -(nu + 1.0) / 2.0;
    let mut q = Array2::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dists[[i, j]];
            let t = (1.0 + d * d / nu).powf(exponent);
            q[[i, j]] = t;
            z += t;
        }
    }
    q.mapv_inplace(|t| (t / z).max(Q_FLOOR));
    for i in 0..n {
        q[[i, i]] = 0.0;
    }
    (q, z)
}

fn euclidean_distances(coords: &Array2<f64>) -> Array2<f64> {
    let n = coords.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &coords.row(i) - &coords.row(j);
            let dist = diff.dot(&diff).sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

fn randers_distances(emb: &Embedding) -> Array2<f64> {
    let n = emb.n_points();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[[i, j]] =
                    randers_distance_unchecked(&emb.space, emb.coords.row(i), emb.coords.row(j));
            }
        }
    }
    d
}

/// Euclidean embedding dissimilarities: symmetric q with Σ_{i≠j} q_ij = 1.
pub fn tsne_q(coords: &Array2<f64>, nu: f64) -> (Array2<f64>, f64) {
    student_q(&euclidean_distances(coords), nu)
}

/// Randers embedding dissimilarities: q^F is asymmetric in general and
/// reduces exactly to [`tsne_q`] at ω = 0.
pub fn finsler_tsne_q(emb: &Embedding, nu: f64) -> (Array2<f64>, f64) {
    student_q(&randers_distances(emb), nu)
}

/// KL divergence Σ p ln(p/q) over the support of p.
pub fn kl_divergence(p: &AsymDissimilarities, q: &Array2<f64>) -> f64 {
    let mut kl = 0.0;
    for (i, j, pij) in p.iter_entries() {
        if pij > 0.0 {
            kl += pij * (pij / q[[i, j]].max(Q_FLOOR)).ln();
        }
    }
    kl
}

fn check_global_sum(p: &AsymDissimilarities) -> Result<()> {
    if p.normalization() != Normalization::GlobalSum1 {
        return Err(Error::invalid_param(
            "t-SNE gradients require globally normalised p (Σp = 1)",
        ));
    }
    Ok(())
}

/// Correct gradient of KL(p‖q) for the Student kernel with ν d.o.f.:
/// `2(ν+1)/ν Σ_j (p_ij − q_ij)(1 + d_ij²/ν)⁻¹ (y_i − y_j)`.
pub fn tsne_grad_fixed(
    p: &AsymDissimilarities,
    coords: &Array2<f64>,
    nu: f64,
) -> Result<Array2<f64>> {
    check_global_sum(p)?;
    let n = coords.nrows();
    let m = coords.ncols();
    let dists = euclidean_distances(coords);
    let (q, _) = student_q(&dists, nu);
    let scale = 2.0 * (nu + 1.0) / nu;
    let mut grad = Array2::zeros((n, m));
    let p_dense = p.to_dense();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dists[[i, j]];
            let t = 1.0 / (1.0 + d * d / nu);
            let coeff = scale * (p_dense[[i, j]] - q[[i, j]]) * t;
            for k in 0..m {
                grad[[i, k]] += coeff * (coords[[i, k]] - coords[[j, k]]);
            }
        }
    }
    Ok(grad)
}

/// The published-but-wrong update rule: kernel factor exponent
/// `−(ν+1)/2` instead of `−1`. Coincides with the fixed rule at ν = 1 and
/// fails finite-difference checks for ν ≠ 1.
pub fn tsne_grad_legacy(
    p: &AsymDissimilarities,
    coords: &Array2<f64>,
    nu: f64,
) -> Result<Array2<f64>> {
    check_global_sum(p)?;
    let n = coords.nrows();
    let m = coords.ncols();
    let dists = euclidean_distances(coords);
    let (q, _) = student_q(&dists, nu);
    let scale = 2.0 * (nu + 1.0) / nu;
    let exponent = -(nu + 1.0) / 2.0;
    let mut grad = Array2::zeros((n, m));
    let p_dense = p.to_dense();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dists[[i, j]];
            let t = (1.0 + d * d / nu).powf(exponent);
            let coeff = scale * (p_dense[[i, j]] - q[[i, j]]) * t;
            for k in 0..m {
                grad[[i, k]] += coeff * (coords[[i, k]] - coords[[j, k]]);
            }
        }
    }
    Ok(grad)
}

/// Gradient of the Randers-space loss −Σ p ln q^F for possibly asymmetric p
/// with Σp = 1.
///
/// Writing δ_ij = p_ij − q^F_ij and t_ij = (1 + (d^F_ij)²/ν)⁻¹, the update
/// splits into a ray force along y_i − y_j and a drift force along ω:
///
/// ```text
/// ∂L/∂y_i = (ν+1)/ν Σ_j [δ_ij t_ij d^F_ij/d_ij + δ_ji t_ji d^F_ji/d_ij](y_i − y_j)
///         + (ν+1)/ν Σ_j [−δ_ij t_ij d^F_ij + δ_ji t_ji d^F_ji] ω
/// ```
///
/// At ω = 0 this equals [`tsne_grad_fixed`] for symmetric p.
pub fn finsler_tsne_grad(
    p: &AsymDissimilarities,
    emb: &Embedding,
    nu: f64,
) -> Result<Array2<f64>> {
    check_global_sum(p)?;
    emb.space.validate()?;
    Ok(finsler_tsne_grad_raw(p, emb, nu))
}

/// Gradient without the Σp = 1 check; the optimiser calls this directly
/// because early exaggeration deliberately rescales p.
fn finsler_tsne_grad_raw(p: &AsymDissimilarities, emb: &Embedding, nu: f64) -> Array2<f64> {
    let n = emb.n_points();
    let m = emb.dim();
    let coords = &emb.coords;
    let eucl = euclidean_distances(coords);
    let finsler = randers_distances(emb);
    let (q, _) = student_q(&finsler, nu);
    let p_dense = p.to_dense();
    let omega = emb.space.omega();
    let scale = (nu + 1.0) / nu;
    let mut grad = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = eucl[[i, j]].max(EPS_DIST);
            let df_ij = finsler[[i, j]];
            let df_ji = finsler[[j, i]];
            let t_ij = 1.0 / (1.0 + df_ij * df_ij / nu);
            let t_ji = 1.0 / (1.0 + df_ji * df_ji / nu);
            let delta_ij = p_dense[[i, j]] - q[[i, j]];
            let delta_ji = p_dense[[j, i]] - q[[j, i]];
            let ray = scale * (delta_ij * t_ij * df_ij + delta_ji * t_ji * df_ji) / d;
            let drift = scale * (-delta_ij * t_ij * df_ij + delta_ji * t_ji * df_ji);
            for k in 0..m {
                grad[[i, k]] += ray * (coords[[i, k]] - coords[[j, k]]) + drift * omega[k];
            }
        }
    }
    grad
}

/// Result of a [`run_tsne`] optimisation.
#[derive(Debug, Clone)]
pub struct TsneRun {
    pub embedding: Embedding,
    /// KL(p‖q) recorded at the start of each epoch.
    pub trace: Vec<f64>,
}

/// Momentum gradient descent on the (Finsler) t-SNE loss.
///
/// Euclidean when the space has ω = 0, Randers otherwise — the same code
/// path, so an ω = 0 run is bitwise identical to the Euclidean twin.
pub fn run_tsne(
    p: &AsymDissimilarities,
    config: &TsneConfig,
    init: &Embedding,
    space: &RandersSpace,
) -> Result<TsneRun> {
    check_global_sum(p)?;
    space.validate()?;
    if init.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: init.dim(),
        });
    }
    if p.n() != init.n_points() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: init.n_points(),
        });
    }
    let nu = config.resolve_nu(space.dim());
    let n = init.n_points();
    let m = space.dim();

    let mut coords = init.coords.clone();
    let mut update: Array2<f64> = Array2::zeros((n, m));
    let mut trace = Vec::with_capacity(config.epochs);

    // Early exaggeration multiplies p uniformly; the gradient sees the
    // exaggerated target, the trace reports the true one.
    let exaggerated = if config.plain_gd || config.early_exaggeration == 1.0 {
        None
    } else {
        Some(p.scaled(config.early_exaggeration, Normalization::None)?)
    };

    for epoch in 0..config.epochs {
        let emb = Embedding::new(coords.clone(), space.clone())?;
        let q = finsler_tsne_q(&emb, nu).0;
        let loss = kl_divergence(p, &q);
        if !loss.is_finite() {
            return Err(Error::numerical(format!("non-finite loss at epoch {epoch}")));
        }
        trace.push(loss);

        let target = match (&exaggerated, epoch < config.exaggeration_epochs) {
            (Some(ex), true) => ex,
            _ => p,
        };
        let grad = finsler_tsne_grad_raw(target, &emb, nu);

        if config.plain_gd {
            coords = &coords - &(&grad * config.learning_rate);
        } else {
            let momentum = if epoch < config.momentum_switch {
                config.momentum_early
            } else {
                config.momentum_late
            };
            update = &(&update * momentum) - &(&grad * config.learning_rate);
            coords = &coords + &update;
        }
        // Both losses are translation invariant; recentring keeps
        // coordinates bounded.
        let mean = coords.mean_axis(ndarray::Axis(0)).unwrap();
        for mut row in coords.rows_mut() {
            row -= &mean;
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite coordinates at epoch {epoch}"
            )));
        }
    }

    Ok(TsneRun {
        embedding: Embedding::new(coords, space.clone())?,
        trace,
    })
}
