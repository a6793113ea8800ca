//! UMAP and its Randers-space generalisation, optimised by negative-sampling
//! stochastic gradient descent.
//!
//! The Randers force gradients keep the exact antisymmetry of their
//! Euclidean counterparts: `∂c/∂y_j = −∂c/∂y_i` holds componentwise as
//! computed, because both ends share one coefficient and exactly negated
//! direction vectors.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dissim::AsymDissimilarities;
use crate::error::{Error, Result};
use crate::geometry::{RandersSpace, EPS_DIST};
use crate::init::Embedding;

/// Optimiser settings for [`run_umap`].
#[derive(Debug, Clone)]
pub struct UmapConfig {
    pub k: usize,
    pub min_dist: f64,
    pub spread: f64,
    /// Kernel curve parameters; `None` means fit from (min_dist, spread).
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub epochs: usize,
    pub neg_samples: usize,
    /// Initial learning rate, annealed linearly to 0.
    pub learning_rate: f64,
    pub seed: u64,
    /// Per-coordinate gradient clip.
    pub grad_clip: f64,
    /// Apply the tail gradient of the repulsive force too (full
    /// antisymmetric updates); default repels the head point only.
    pub symmetric_updates: bool,
    /// Lock-free parallel epoch processing with racy coordinate updates.
    /// Faster, but not deterministic.
    pub parallel: bool,
}

impl Default for UmapConfig {
    fn default() -> Self {
        UmapConfig {
            k: 15,
            min_dist: 0.1,
            spread: 1.0,
            a: None,
            b: None,
            epochs: 200,
            neg_samples: 5,
            learning_rate: 1.0,
            seed: 0,
            grad_clip: 4.0,
            symmetric_updates: false,
            parallel: false,
        }
    }
}

impl UmapConfig {
    /// Fitted or supplied curve parameters.
    pub fn resolve_ab(&self) -> Result<(f64, f64)> {
        match (self.a, self.b) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => fit_ab(self.min_dist, self.spread),
        }
    }
}

/// Fit (a, b) so that `(1 + a d^{2b})⁻¹` approximates the piecewise target
/// `1` for `d ≤ min_dist`, `exp(−(d − min_dist)/spread)` beyond, by
/// Levenberg–Marquardt least squares on a grid over `[0, 3·spread]`.
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<(f64, f64)> {
    if min_dist <= 0.0 || spread <= 0.0 || min_dist > 10.0 * spread {
        return Err(Error::invalid_param(format!(
            "bad curve-fit inputs: min_dist = {min_dist}, spread = {spread}"
        )));
    }
    let n_grid = 300;
    let xs: Vec<f64> = (0..n_grid)
        .map(|i| 3.0 * spread * (i as f64) / (n_grid as f64 - 1.0))
        .collect();
    let target: Vec<f64> = xs
        .iter()
        .map(|&d| {
            if d <= min_dist {
                1.0
            } else {
                (-(d - min_dist) / spread).exp()
            }
        })
        .collect();

    let residuals = |a: f64, b: f64| -> Vec<f64> {
        xs.iter()
            .zip(&target)
            .map(|(&d, &t)| 1.0 / (1.0 + a * d.powf(2.0 * b)) - t)
            .collect()
    };
    let rms = |r: &[f64]| (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();

    let mut a = 1.0;
    let mut b = 1.0;
    let mut lambda = 1e-3;
    let mut r = residuals(a, b);
    let mut cost = rms(&r);
    for _ in 0..200 {
        // Jacobian of the model wrt (a, b).
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (idx, &d) in xs.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let pow = d.powf(2.0 * b);
            let q = 1.0 / (1.0 + a * pow);
            let da = -pow * q * q;
            let db = -a * pow * 2.0 * d.ln() * q * q;
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r[idx];
            jtr[1] += db * r[idx];
        }
        jtj[1][0] = jtj[0][1];
        let m00 = jtj[0][0] + lambda;
        let m11 = jtj[1][1] + lambda;
        let det = m00 * m11 - jtj[0][1] * jtj[0][1];
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let step_b = -(m00 * jtr[1] - jtj[0][1] * jtr[0]) / det;
        let na = (a + step_a).max(1e-6);
        let nb = (b + step_b).max(1e-6);
        let nr = residuals(na, nb);
        let ncost = rms(&nr);
        if ncost < cost {
            a = na;
            b = nb;
            r = nr;
            lambda = (lambda * 0.5).max(1e-12);
            if (ncost - cost).abs() < 1e-14 {
                cost = ncost;
                break;
            }
            cost = ncost;
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    // The optimum for the default (0.1, 1.0) pair has RMS ≈ 0.0162; a
    // diverged fit is an order of magnitude worse.
    if cost >= 0.03 {
        return Err(Error::numerical(format!(
            "curve fit did not converge: residual RMS {cost}"
        )));
    }
    Ok((a, b))
}

/// Shared force kernel. `d_eucl` is the Euclidean separation, `d_kernel` the
/// distance fed to the kernel (Randers or Euclidean), `omega` the drift
/// (empty view for Euclidean). Returns the gradient with respect to the
/// head point y_i; the tail gradient is its exact negation.
fn attractive_head(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    d_eucl: f64,
    d_kernel: f64,
    omega: Option<ArrayView1<'_, f64>>,
    a: f64,
    b: f64,
) -> Array1<f64> {
    let q = 1.0 / (1.0 + a * d_kernel.powf(2.0 * b));
    let coeff = 2.0 * a * b * d_kernel.powf(2.0 * b - 1.0) * q;
    force_along(yi, yj, d_eucl, omega, coeff)
}

fn repulsive_head(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    d_eucl: f64,
    d_kernel: f64,
    omega: Option<ArrayView1<'_, f64>>,
    a: f64,
    b: f64,
) -> Array1<f64> {
    let q = 1.0 / (1.0 + a * d_kernel.powf(2.0 * b));
    let coeff = -2.0 * b * q / d_kernel.max(EPS_DIST);
    force_along(yi, yj, d_eucl, omega, coeff)
}

/// coeff · [(y_i − y_j)/d − ω], the gradient direction of d(y_i, y_j) in y_i.
fn force_along(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    d_eucl: f64,
    omega: Option<ArrayView1<'_, f64>>,
    coeff: f64,
) -> Array1<f64> {
    let m = yi.len();
    let d = d_eucl.max(EPS_DIST);
    let mut out = Array1::zeros(m);
    for k in 0..m {
        let mut dir = (yi[k] - yj[k]) / d;
        if let Some(w) = omega {
            dir -= w[k];
        }
        out[k] = coeff * dir;
    }
    out
}

fn euclidean(yi: ArrayView1<'_, f64>, yj: ArrayView1<'_, f64>) -> f64 {
    let mut sq = 0.0;
    for k in 0..yi.len() {
        let d = yi[k] - yj[k];
        sq += d * d;
    }
    sq.sqrt()
}

fn randers(space: &RandersSpace, yi: ArrayView1<'_, f64>, yj: ArrayView1<'_, f64>) -> f64 {
    crate::geometry::randers_distance_unchecked(space, yi, yj)
}

/// Gradient of the attractive force −ln q wrt the head point y_i.
pub fn umap_attractive_grad(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    a: f64,
    b: f64,
) -> Array1<f64> {
    let d = euclidean(yi, yj);
    attractive_head(yi, yj, d, d, None, a, b)
}

/// Gradient of the repulsive force −ln(1 − q) wrt the head point y_i.
pub fn umap_repulsive_grad(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    a: f64,
    b: f64,
) -> Array1<f64> {
    let d = euclidean(yi, yj);
    repulsive_head(yi, yj, d, d, None, a, b)
}

/// Randers-space head gradients of the attractive and repulsive forces:
///
/// ```text
/// ∂c^a/∂y_i = 2ab (d^F)^{2b−1} q^F [(y_i − y_j)/d − ω]
/// ∂c^r/∂y_i = −2b q^F/d^F [(y_i − y_j)/d − ω]
/// ```
///
/// ω = 0 reduces both to the Euclidean gradients bitwise.
pub fn finsler_umap_grads(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    space: &RandersSpace,
    a: f64,
    b: f64,
) -> (Array1<f64>, Array1<f64>) {
    let d = euclidean(yi, yj);
    let df = randers(space, yi, yj);
    let omega = Some(space.omega());
    (
        attractive_head(yi, yj, d, df, omega, a, b),
        repulsive_head(yi, yj, d, df, omega, a, b),
    )
}

/// Tail gradients (wrt y_j) of the same two forces, computed from the tail's
/// own direction vector `(y_j − y_i)/d + ω`. Componentwise these are the
/// exact negations of the head gradients.
pub fn finsler_umap_tail_grads(
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    space: &RandersSpace,
    a: f64,
    b: f64,
) -> (Array1<f64>, Array1<f64>) {
    let d = euclidean(yi, yj).max(EPS_DIST);
    let df = randers(space, yi, yj);
    let omega = space.omega();
    let m = yi.len();
    let qf = 1.0 / (1.0 + a * df.powf(2.0 * b));
    let attr_coeff = 2.0 * a * b * df.powf(2.0 * b - 1.0) * qf;
    let rep_coeff = -2.0 * b * qf / df.max(EPS_DIST);
    let mut attr = Array1::zeros(m);
    let mut rep = Array1::zeros(m);
    for k in 0..m {
        let dir = (yj[k] - yi[k]) / d + omega[k];
        attr[k] = attr_coeff * dir;
        rep[k] = rep_coeff * dir;
    }
    (attr, rep)
}

/// Positive-edge sampling schedule: edge e with weight p_e is updated
/// ⌊epochs·p_e/max_p⌋ times across the run, evenly spread, the way the
/// reference scheme spaces updates by max_p/p_e epochs.
#[derive(Debug, Clone)]
pub struct SampleSchedule {
    rate: Vec<f64>,
    next_due: Vec<f64>,
}

impl SampleSchedule {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let max_p = weights.iter().cloned().fold(0.0f64, f64::max);
        if max_p <= 0.0 {
            return Err(Error::invalid_param("all edge weights are zero"));
        }
        let rate: Vec<f64> = weights.iter().map(|&p| max_p / p).collect();
        Ok(SampleSchedule {
            next_due: rate.clone(),
            rate,
        })
    }

    /// Indices of edges due at 1-based `epoch`. Rates are ≥ 1, so an edge
    /// fires at most once per epoch.
    pub fn due(&mut self, epoch: usize) -> Vec<usize> {
        let e = epoch as f64;
        let mut out = Vec::new();
        for (idx, next) in self.next_due.iter_mut().enumerate() {
            if *next <= e {
                out.push(idx);
                *next += self.rate[idx];
            }
        }
        out
    }
}

/// Result of a [`run_umap`] optimisation.
#[derive(Debug, Clone)]
pub struct UmapRun {
    pub embedding: Embedding,
}

/// Negative-sampling SGD on the (Finsler) UMAP objective.
///
/// Each due positive edge (i, j) pulls y_i and y_j together through the
/// attractive gradient (both ends move; they are exact negations), then
/// `neg_samples` uniformly random targets t ≠ i push y_i away. Per-coordinate
/// gradients are clipped to ±`grad_clip` and the learning rate decays
/// linearly to 0. Deterministic given the seed unless `parallel` is set.
pub fn run_umap(
    p: &AsymDissimilarities,
    config: &UmapConfig,
    init: &Embedding,
    space: &RandersSpace,
) -> Result<UmapRun> {
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
    let n = p.n();
    if n < 2 {
        return Err(Error::invalid_param("need at least two points"));
    }
    for (_, _, v) in p.iter_entries() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::invalid_param(format!(
                "UMAP memberships must lie in (0, 1], got {v}"
            )));
        }
    }
    let (a, b) = config.resolve_ab()?;

    let edges: Vec<(usize, usize, f64)> = p.iter_entries().collect();
    if edges.is_empty() {
        return Err(Error::invalid_param("empty dissimilarity support"));
    }
    let weights: Vec<f64> = edges.iter().map(|&(_, _, w)| w).collect();
    let mut schedule = SampleSchedule::new(&weights)?;

    let mut coords = init.coords.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for epoch in 1..=config.epochs {
        let alpha = config.learning_rate * (1.0 - (epoch as f64 - 1.0) / config.epochs as f64);
        let due = schedule.due(epoch);
        if config.parallel {
            apply_epoch_parallel(
                &mut coords, &edges, &due, space, a, b, config, alpha, epoch,
            );
        } else {
            apply_epoch_serial(&mut coords, &edges, &due, space, a, b, config, alpha, &mut rng);
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite coordinates at epoch {epoch}"
            )));
        }
    }

    Ok(UmapRun {
        embedding: Embedding::new(coords, space.clone())?,
    })
}

#[allow(clippy::too_many_arguments)]
fn apply_epoch_serial(
    coords: &mut Array2<f64>,
    edges: &[(usize, usize, f64)],
    due: &[usize],
    space: &RandersSpace,
    a: f64,
    b: f64,
    config: &UmapConfig,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) {
    let n = coords.nrows();
    let m = coords.ncols();
    let clip = config.grad_clip;
    for &e in due {
        let (i, j, _) = edges[e];
        let (attr, _) = finsler_umap_grads(coords.row(i), coords.row(j), space, a, b);
        for k in 0..m {
            let g = attr[k].clamp(-clip, clip) * alpha;
            coords[[i, k]] -= g;
            coords[[j, k]] += g;
        }
        for _ in 0..config.neg_samples {
            let mut t = rng.gen_range(0..n);
            while t == i {
                t = rng.gen_range(0..n);
            }
            let (_, rep) = finsler_umap_grads(coords.row(i), coords.row(t), space, a, b);
            for k in 0..m {
                let g = rep[k].clamp(-clip, clip) * alpha;
                coords[[i, k]] -= g;
                if config.symmetric_updates {
                    coords[[t, k]] += g;
                }
            }
        }
    }
}

/// Lock-free parallel epoch: racy relaxed loads/stores on the coordinate
/// buffer (lost updates possible, which is the usual trade in this scheme).
#[allow(clippy::too_many_arguments)]
fn apply_epoch_parallel(
    coords: &mut Array2<f64>,
    edges: &[(usize, usize, f64)],
    due: &[usize],
    space: &RandersSpace,
    a: f64,
    b: f64,
    config: &UmapConfig,
    alpha: f64,
    epoch: usize,
) {
    let n = coords.nrows();
    let m = coords.ncols();
    let clip = config.grad_clip;
    let cells: Vec<AtomicU64> = coords.iter().map(|&v| AtomicU64::new(v.to_bits())).collect();
    let load_row = |idx: usize| -> Array1<f64> {
        Array1::from_iter((0..m).map(|k| f64::from_bits(cells[idx * m + k].load(Ordering::Relaxed))))
    };
    let add_to = |idx: usize, k: usize, delta: f64| {
        let cell = &cells[idx * m + k];
        let old = f64::from_bits(cell.load(Ordering::Relaxed));
        cell.store((old + delta).to_bits(), Ordering::Relaxed);
    };

    due.par_iter().enumerate().for_each(|(slot, &e)| {
        let (i, j, _) = edges[e];
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .wrapping_add((slot as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)),
        );
        let yi = load_row(i);
        let yj = load_row(j);
        let (attr, _) = finsler_umap_grads(yi.view(), yj.view(), space, a, b);
        for k in 0..m {
            let g = attr[k].clamp(-clip, clip) * alpha;
            add_to(i, k, -g);
            add_to(j, k, g);
        }
        for _ in 0..config.neg_samples {
            let mut t = rng.gen_range(0..n);
            while t == i {
                t = rng.gen_range(0..n);
            }
            let yi = load_row(i);
            let yt = load_row(t);
            let (_, rep) = finsler_umap_grads(yi.view(), yt.view(), space, a, b);
            for k in 0..m {
                let g = rep[k].clamp(-clip, clip) * alpha;
                add_to(i, k, -g);
                if config.symmetric_updates {
                    add_to(t, k, g);
                }
            }
        }
    });

    for (cell, slot) in cells.iter().zip(coords.iter_mut()) {
        *slot = f64::from_bits(cell.load(Ordering::Relaxed));
    }
}
