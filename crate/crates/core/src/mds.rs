//! Stress-based embeddings: SMACOF majorization, the Randers-space SMACOF
//! step, and Adam gradient descent on the Randers stress.
//!
//! The Randers SMACOF update solves `K vec(Y') = vec(B(Y)Y − C)` with
//! `K = (I_m + ωω⊤) ⊗ V`. Rather than materialising the Nm×Nm system, we
//! use `K† = (I_m + ωω⊤)⁻¹ ⊗ V†`, i.e. `Y' = V†(B(Y)Y − C)(I_m + ωω⊤)⁻¹`,
//! with the rank-one inverse in closed form. Unlike plain SMACOF this step
//! carries no monotonicity guarantee and is kept for desk-scale problems;
//! the gradient-descent solver is the scalable route.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::geometry::{randers_distance_unchecked, RandersSpace, EPS_DIST};
use crate::init::Embedding;

/// Hard size guard (N·m) for the Randers SMACOF step.
const SMACOF_SIZE_LIMIT: usize = 4000;

/// Target dissimilarities D (possibly asymmetric), nonnegative weights W
/// with zero diagonal, and the space the stress is measured in.
#[derive(Debug, Clone)]
pub struct StressProblem {
    pub targets: Array2<f64>,
    pub weights: Array2<f64>,
    pub space: RandersSpace,
}

impl StressProblem {
    pub fn new(targets: Array2<f64>, weights: Array2<f64>, space: RandersSpace) -> Result<Self> {
        let n = targets.nrows();
        if targets.ncols() != n || weights.nrows() != n || weights.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: weights.nrows().max(targets.ncols()),
            });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_param("targets must be finite"));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_param(
                "weights must be finite and nonnegative",
            ));
        }
        for i in 0..n {
            if weights[[i, i]] != 0.0 {
                return Err(Error::invalid_param(format!(
                    "weight diagonal must be zero (W[{i},{i}] = {})",
                    weights[[i, i]]
                )));
            }
        }
        space.validate()?;
        Ok(StressProblem {
            targets,
            weights,
            space,
        })
    }

    /// Uniform off-diagonal weights.
    pub fn uniform(targets: Array2<f64>, space: RandersSpace) -> Result<Self> {
        let n = targets.nrows();
        let mut weights = Array2::from_elem((n, n), 1.0);
        for i in 0..n {
            weights[[i, i]] = 0.0;
        }
        StressProblem::new(targets, weights, space)
    }

    pub fn n_points(&self) -> usize {
        self.targets.nrows()
    }
}

/// Euclidean weighted stress `Σ_{i≠j} w_ij (‖y_j − y_i‖₂ − D_ij)²`.
pub fn stress(coords: &Array2<f64>, problem: &StressProblem) -> f64 {
    let n = problem.n_points();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || problem.weights[[i, j]] == 0.0 {
                continue;
            }
            let diff = &coords.row(j) - &coords.row(i);
            let d = diff.dot(&diff).sqrt();
            let r = d - problem.targets[[i, j]];
            acc += problem.weights[[i, j]] * r * r;
        }
    }
    acc
}

/// Randers weighted stress `Σ_{i≠j} w_ij (d_F(y_i, y_j) − D_ij)²`; equals
/// [`stress`] when the problem's space has ω = 0.
pub fn finsler_stress(coords: &Array2<f64>, problem: &StressProblem) -> f64 {
    let n = problem.n_points();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || problem.weights[[i, j]] == 0.0 {
                continue;
            }
            let d = randers_distance_unchecked(&problem.space, coords.row(i), coords.row(j));
            let r = d - problem.targets[[i, j]];
            acc += problem.weights[[i, j]] * r * r;
        }
    }
    acc
}

/// Analytic gradient of [`finsler_stress`].
pub fn finsler_stress_grad(coords: &Array2<f64>, problem: &StressProblem) -> Array2<f64> {
    let n = problem.n_points();
    let m = coords.ncols();
    let omega = problem.space.omega();
    let mut grad = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w_ij = problem.weights[[i, j]];
            let w_ji = problem.weights[[j, i]];
            if w_ij == 0.0 && w_ji == 0.0 {
                continue;
            }
            let diff = &coords.row(i) - &coords.row(j);
            let d = diff.dot(&diff).sqrt().max(EPS_DIST);
            let drift = -omega.dot(&diff); // ω⊤(y_j − y_i)
            let df_ij = d + drift;
            let df_ji = d - drift;
            // ∂d_F(y_i, y_j)/∂y_i = (y_i − y_j)/d − ω
            // ∂d_F(y_j, y_i)/∂y_i = (y_i − y_j)/d + ω
            let c_ij = 2.0 * w_ij * (df_ij - problem.targets[[i, j]]);
            let c_ji = 2.0 * w_ji * (df_ji - problem.targets[[j, i]]);
            for k in 0..m {
                let ray = diff[k] / d;
                grad[[i, k]] += c_ij * (ray - omega[k]) + c_ji * (ray + omega[k]);
            }
        }
    }
    grad
}

/// Solver state shared by the SMACOF steps: V's pseudo-inverse.
struct MajorizationMatrices {
    v_pinv: Array2<f64>,
}

impl MajorizationMatrices {
    fn new(problem: &StressProblem) -> Result<Self> {
        let n = problem.n_points();
        let w = &problem.weights;
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return Err(Error::invalid_param("zero-weight stress problem"));
        }
        // Uniform weights give V = w(N·I − 𝟙𝟙⊤) whose pseudo-inverse is the
        // centering projector scaled by 1/(wN).
        let w0 = w[[0, 1]];
        let uniform = w0 > 0.0
            && (0..n).all(|i| (0..n).all(|j| i == j || (w[[i, j]] - w0).abs() <= 1e-15 * w0));
        let v_pinv = if uniform {
            let scale = 1.0 / (w0 * n as f64);
            let mut p = Array2::from_elem((n, n), -scale / n as f64);
            for i in 0..n {
                p[[i, i]] += scale;
            }
            p
        } else {
            let mut v = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        v[[i, j]] = -w[[i, j]];
                        v[[i, i]] += w[[i, j]];
                    }
                }
            }
            let (pinv, cond) = crate::linalg::pinv_psd(v.view(), 1e-10)?;
            if !cond.is_finite() {
                return Err(Error::numerical(format!(
                    "V pseudo-inverse failed (condition estimate {cond})"
                )));
            }
            pinv
        };
        Ok(MajorizationMatrices { v_pinv })
    }
}

fn check_symmetric(m: &Array2<f64>, what: &str) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * (1.0 + m[[i, j]].abs()) {
                return Err(Error::invalid_param(format!(
                    "{what} must be symmetric for the Euclidean SMACOF step"
                )));
            }
        }
    }
    Ok(())
}

/// One Guttman transform `Y' = V† B(Y) Y`. Requires ω = 0 and symmetric
/// D, W; the stress never increases, and the step verifies that.
pub fn smacof_step(coords: &Array2<f64>, problem: &StressProblem) -> Result<Array2<f64>> {
    if !problem.space.is_euclidean() {
        return Err(Error::invalid_param(
            "smacof_step is the Euclidean special case; use finsler_smacof_step",
        ));
    }
    check_symmetric(&problem.targets, "D")?;
    check_symmetric(&problem.weights, "W")?;
    let mats = MajorizationMatrices::new(problem)?;
    let before = stress(coords, problem);
    let next = mats.v_pinv.dot(&b_times_y(coords, problem, false).0);
    let after = stress(&next, problem);
    if after > before + 1e-10 * (1.0 + before) {
        return Err(Error::numerical(format!(
            "majorization failed to decrease stress: {before} -> {after}"
        )));
    }
    Ok(next)
}

/// B(Y)·Y with the kernel distance either Euclidean or Randers; also counts
/// pairs clamped at near-zero distance (their B entry is dropped).
fn b_times_y(
    coords: &Array2<f64>,
    problem: &StressProblem,
    randers: bool,
) -> (Array2<f64>, usize) {
    let n = problem.n_points();
    let m = coords.ncols();
    let mut by = Array2::zeros((n, m));
    let mut clamped = 0usize;
    for i in 0..n {
        let mut diag = 0.0;
        let mut acc = Array1::<f64>::zeros(m);
        for j in 0..n {
            if i == j || problem.weights[[i, j]] == 0.0 {
                continue;
            }
            let d = if randers {
                randers_distance_unchecked(&problem.space, coords.row(i), coords.row(j))
            } else {
                let diff = &coords.row(j) - &coords.row(i);
                diff.dot(&diff).sqrt()
            };
            if d <= EPS_DIST {
                clamped += 1;
                continue;
            }
            let b_ij = -problem.weights[[i, j]] * problem.targets[[i, j]] / d;
            diag -= b_ij;
            for k in 0..m {
                acc[k] += b_ij * coords[[j, k]];
            }
        }
        for k in 0..m {
            by[[i, k]] = acc[k] + diag * coords[[i, k]];
        }
    }
    (by, clamped)
}

/// One Randers SMACOF step `vec(Y') = K† vec(B(Y)Y − C)` with
/// `K = (I_m + ωω⊤) ⊗ V` and `C = (W⊙D − W⊤⊙D⊤)𝟙 ω⊤`.
///
/// Reduces to [`smacof_step`] at ω = 0, carries no descent guarantee, and
/// refuses problems with N·m > 4000 (use [`run_finsler_mds_gd`] instead).
pub fn finsler_smacof_step(coords: &Array2<f64>, problem: &StressProblem) -> Result<Array2<f64>> {
    let n = problem.n_points();
    let m = coords.ncols();
    if n * m > SMACOF_SIZE_LIMIT {
        return Err(Error::invalid_param(format!(
            "N·m = {} exceeds the SMACOF limit {SMACOF_SIZE_LIMIT}; use run_finsler_mds_gd",
            n * m
        )));
    }
    let mats = MajorizationMatrices::new(problem)?;
    Ok(finsler_guttman(coords, problem, &mats).0)
}

fn finsler_guttman(
    coords: &Array2<f64>,
    problem: &StressProblem,
    mats: &MajorizationMatrices,
) -> (Array2<f64>, usize) {
    let n = problem.n_points();
    let m = coords.ncols();
    let omega = problem.space.omega().to_owned();
    let (mut rhs, clamped) = b_times_y(coords, problem, true);

    // C = (W⊙D − W⊤⊙D⊤) 𝟙 ω⊤: row sums of the weighted-target asymmetry.
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            row_sum += problem.weights[[i, j]] * problem.targets[[i, j]]
                - problem.weights[[j, i]] * problem.targets[[j, i]];
        }
        for k in 0..m {
            rhs[[i, k]] -= row_sum * omega[k];
        }
    }

    // (I_m + ωω⊤)⁻¹ = I_m − ωω⊤/(1 + ‖ω‖²), applied on the right.
    let half = mats.v_pinv.dot(&rhs);
    let omega_sq = omega.dot(&omega);
    let next = if omega_sq == 0.0 {
        half
    } else {
        let proj = half.dot(&omega);
        let scale = 1.0 / (1.0 + omega_sq);
        let mut out = half;
        for i in 0..n {
            let c = proj[i] * scale;
            for k in 0..m {
                out[[i, k]] -= c * omega[k];
            }
        }
        out
    };
    (next, clamped)
}

/// Result of an iterated stress optimisation.
#[derive(Debug, Clone)]
pub struct SmacofRun {
    pub embedding: Embedding,
    /// Stress before the first step and after each one.
    pub trace: Vec<f64>,
    /// Per-step count of pairs clamped at near-zero Randers distance
    /// (empty for the gradient-descent solver).
    pub clamped_pairs: Vec<usize>,
}

/// Iterated Randers SMACOF steps with a stress trace.
pub fn run_finsler_smacof(
    problem: &StressProblem,
    init: &Embedding,
    epochs: usize,
) -> Result<SmacofRun> {
    let n = problem.n_points();
    let m = init.dim();
    if init.n_points() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.n_points(),
        });
    }
    if m != problem.space.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.space.dim(),
            got: m,
        });
    }
    if n * m > SMACOF_SIZE_LIMIT {
        return Err(Error::invalid_param(format!(
            "N·m = {} exceeds the SMACOF limit {SMACOF_SIZE_LIMIT}; use run_finsler_mds_gd",
            n * m
        )));
    }
    let mats = MajorizationMatrices::new(problem)?;
    let mut coords = init.coords.clone();
    let mut trace = Vec::with_capacity(epochs + 1);
    let mut clamps = Vec::with_capacity(epochs);
    trace.push(finsler_stress(&coords, problem));
    for epoch in 0..epochs {
        let (next, clamped) = finsler_guttman(&coords, problem, &mats);
        coords = next;
        clamps.push(clamped);
        let s = finsler_stress(&coords, problem);
        if !s.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite stress at epoch {epoch}"
            )));
        }
        trace.push(s);
    }
    Ok(SmacofRun {
        embedding: Embedding::new(coords, problem.space.clone())?,
        trace,
        clamped_pairs: clamps,
    })
}

/// Adam + cosine-annealing options for [`run_finsler_mds_gd`].
#[derive(Debug, Clone)]
pub struct GdOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Cosine annealing period (the schedule's maximum temperature).
    pub cosine_t_max: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            learning_rate: 0.1,
            epochs: 100,
            weight_decay: 1e-5,
            cosine_t_max: 100.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam gradient descent on the Randers stress with a cosine-annealed
/// learning rate. The scalable alternative to the Randers SMACOF step.
pub fn run_finsler_mds_gd(
    problem: &StressProblem,
    init: &Embedding,
    opt: &GdOptions,
) -> Result<SmacofRun> {
    let n = problem.n_points();
    if init.n_points() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.n_points(),
        });
    }
    if init.dim() != problem.space.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.space.dim(),
            got: init.dim(),
        });
    }
    let m = init.dim();
    let mut coords = init.coords.clone();
    let mut m1: Array2<f64> = Array2::zeros((n, m));
    let mut m2: Array2<f64> = Array2::zeros((n, m));
    let mut trace = Vec::with_capacity(opt.epochs + 1);
    trace.push(finsler_stress(&coords, problem));

    for epoch in 0..opt.epochs {
        let lr = opt.learning_rate
            * 0.5
            * (1.0 + (std::f64::consts::PI * epoch as f64 / opt.cosine_t_max).cos());
        let mut grad = finsler_stress_grad(&coords, problem);
        if opt.weight_decay != 0.0 {
            grad = grad + &(&coords * opt.weight_decay);
        }
        let t = (epoch + 1) as f64;
        let bc1 = 1.0 - opt.beta1.powf(t);
        let bc2 = 1.0 - opt.beta2.powf(t);
        for i in 0..n {
            for k in 0..m {
                let g = grad[[i, k]];
                m1[[i, k]] = opt.beta1 * m1[[i, k]] + (1.0 - opt.beta1) * g;
                m2[[i, k]] = opt.beta2 * m2[[i, k]] + (1.0 - opt.beta2) * g * g;
                let mhat = m1[[i, k]] / bc1;
                let vhat = m2[[i, k]] / bc2;
                coords[[i, k]] -= lr * mhat / (vhat.sqrt() + opt.eps);
            }
        }
        let s = finsler_stress(&coords, problem);
        if !s.is_finite() || coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite stress at epoch {epoch}"
            )));
        }
        trace.push(s);
    }
    Ok(SmacofRun {
        embedding: Embedding::new(coords, problem.space.clone())?,
        trace,
        clamped_pairs: Vec::new(),
    })
}
