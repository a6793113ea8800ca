//! Synthetic data generators for the toy experiments, plus CSV ingestion
//! for external tabular data.
//!
//! The disk and Swiss-roll generators are seed-free and bitwise stable; the
//! persistence generator is deterministic given its seed.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::DataMatrix;
use crate::linalg::jacobi_eigh;

/// Points on a uniform polar grid over the unit disk: 20 angles × n/20
/// radii. Uniform in (ρ, θ) means the Cartesian density grows toward the
/// centre, the asymmetry the toy experiment feeds on.
pub fn gen_disk(n: usize) -> Result<DataMatrix> {
    if n == 0 || n % 20 != 0 {
        return Err(Error::invalid_param(format!(
            "disk size n = {n} must be a positive multiple of 20"
        )));
    }
    let n_angles = 20;
    let n_radii = n / 20;
    let mut values = Array2::zeros((n, 2));
    let mut row = 0;
    for r in 0..n_radii {
        let rho = (r + 1) as f64 / n_radii as f64;
        for a in 0..n_angles {
            let theta = 2.0 * std::f64::consts::PI * a as f64 / n_angles as f64;
            values[[row, 0]] = rho * theta.cos();
            values[[row, 1]] = rho * theta.sin();
            row += 1;
        }
    }
    DataMatrix::new(values)
}

/// Swiss-roll sample: grid the unit square with ⌊(5/2)√ñ⌋ × ⌊(2/5)√ñ⌋
/// points, stretch to ũ = 3π(u + ½), ṽ = 20v, and roll
/// x = (ũ cos ũ, ṽ, ũ sin ũ). Returns the 3-D points and the (u, v) grid
/// parameters for colouring. n_target = 2000 yields N = 1887.
pub fn gen_swiss_roll(n_target: usize) -> Result<(DataMatrix, Array2<f64>)> {
    if n_target < 25 {
        return Err(Error::invalid_param("need n_target ≥ 25"));
    }
    let sqrt_n = (n_target as f64).sqrt();
    let n_u = (2.5 * sqrt_n).floor() as usize;
    let n_v = (0.4 * sqrt_n).floor() as usize;
    let n = n_u * n_v;
    let mut values = Array2::zeros((n, 3));
    let mut uv = Array2::zeros((n, 2));
    let mut row = 0;
    for iu in 0..n_u {
        let u = iu as f64 / (n_u - 1) as f64;
        let su = 3.0 * std::f64::consts::PI * (u + 0.5);
        for iv in 0..n_v {
            let v = iv as f64 / (n_v - 1) as f64;
            let sv = 20.0 * v;
            values[[row, 0]] = su * su.cos();
            values[[row, 1]] = sv;
            values[[row, 2]] = su * su.sin();
            uv[[row, 0]] = u;
            uv[[row, 1]] = v;
            row += 1;
        }
    }
    Ok((DataMatrix::new(values)?, uv))
}

/// Parameters of [`gen_persistence`].
#[derive(Debug, Clone)]
pub struct PersistenceParams {
    pub n: usize,
    pub classes: usize,
    pub lambda_exp: f64,
    pub p_exp: f64,
    /// Maximum covariance eigenvalue scale (sigmoid squash ceiling).
    pub eig_scale: f64,
    /// Diagonal jitter keeping covariances numerically definite.
    pub eps: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PersistenceParams {
    fn default() -> Self {
        PersistenceParams {
            n: 500,
            classes: 5,
            lambda_exp: 1.0,
            p_exp: 0.99,
            eig_scale: 0.1,
            eps: 1e-5,
            dim: 10,
            seed: 7,
        }
    }
}

/// The p-quantile of the exponential distribution, `q(p) = −ln(1−p)/λ`.
pub fn exp_quantile(lambda: f64, p: f64) -> f64 {
    -(1.0 - p).ln() / lambda
}

/// Gaussian mixture with exponentially decaying class sizes.
///
/// Soft labels c̃ ~ Exp(λ) are binned with width q(p)/C and clipped to
/// {0, …, C−1}, so class counts decay roughly geometrically. Each class gets
/// a mean uniform in the unit cube and a random SPD covariance whose
/// eigenvalues are sigmoid-squashed into (ε, s + ε).
pub fn gen_persistence(params: &PersistenceParams) -> Result<(DataMatrix, Vec<usize>)> {
    let c = params.classes;
    if c < 2 {
        return Err(Error::invalid_param("need at least 2 classes"));
    }
    if !(0.0 < params.p_exp && params.p_exp < 1.0) {
        return Err(Error::invalid_param("p_exp must lie in (0, 1)"));
    }
    if params.lambda_exp <= 0.0 || params.eig_scale <= 0.0 || params.eps <= 0.0 {
        return Err(Error::invalid_param("rates and scales must be positive"));
    }
    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // Labels first: bin Exp(λ) draws by q(p)/C.
    let exp = Exp::new(params.lambda_exp).map_err(|e| Error::invalid_param(e.to_string()))?;
    let bin = exp_quantile(params.lambda_exp, params.p_exp) / c as f64;
    let labels: Vec<usize> = (0..params.n)
        .map(|_| {
            let soft: f64 = exp.sample(&mut rng);
            ((soft / bin).floor() as usize).min(c - 1)
        })
        .collect();

    // Per-class Gaussians: mean in the unit cube, covariance factor from a
    // squashed random SPD matrix.
    let mut factors = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c);
    for _ in 0..c {
        let mean = Array1::from_iter((0..dim).map(|_| rng.gen_range(0.0..1.0)));
        let a = Array2::from_shape_fn((dim, dim), |_| rng.gen_range(0.0..1.0));
        let spd = a.dot(&a.t());
        let (vals, vecs) = jacobi_eigh(spd.view())?;
        // Σ = B·σ_s(Λ)·Bᵀ + εI sampled via B·diag(√(σ_s(λ)+ε)).
        let mut scale = Array2::zeros((dim, dim));
        for k in 0..dim {
            let squashed = params.eig_scale / (1.0 + (-vals[k]).exp());
            scale[[k, k]] = (squashed + params.eps).sqrt();
        }
        factors.push(vecs.dot(&scale));
        means.push(mean);
    }

    let mut values = Array2::zeros((params.n, dim));
    for (i, &label) in labels.iter().enumerate() {
        let z = Array1::from_iter((0..dim).map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x
        }));
        let x = &means[label] + &factors[label].dot(&z);
        values.row_mut(i).assign(&x);
    }
    Ok((DataMatrix::new(values)?, labels))
}

/// Load a rectangular numeric CSV ('.' decimal separator, optional header,
/// which is detected by a non-numeric first line).
pub fn load_points_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(col, field)| field.parse::<f64>().map_err(|_| col + 1))
            .collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(Error::Parse {
                            line,
                            message: format!("ragged row: {} fields, expected {w}", values.len()),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(col) => {
                // A non-numeric first line is a header; anywhere else it is
                // a data error.
                if idx == 0 && rows.is_empty() {
                    continue;
                }
                return Err(Error::Parse {
                    line,
                    message: format!("non-numeric value in column {col}"),
                });
            }
        }
    }
    let n = rows.len();
    let w = width.ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    DataMatrix::new(Array2::from_shape_vec((n, w), flat).map_err(|e| {
        Error::invalid_param(e.to_string())
    })?)
}

/// Load one label per line. Integer labels are used as-is; anything else is
/// interned by first appearance. A non-numeric first line followed by
/// numeric lines is treated as a header and skipped.
pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let content = std::fs::read_to_string(path.as_ref())?;
    let mut lines: Vec<(usize, &str)> = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no labels found".into(),
        });
    }
    if lines.len() > 1 && lines[0].1.parse::<i64>().is_err() && lines[1].1.parse::<i64>().is_ok() {
        lines.remove(0);
    }
    let all_integer = lines.iter().all(|(_, l)| l.parse::<i64>().is_ok());
    let mut labels = Vec::with_capacity(lines.len());
    let mut interned: HashMap<String, usize> = HashMap::new();
    for (line_no, text) in lines {
        if all_integer {
            let v: i64 = text.parse().unwrap();
            if v < 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("negative label {v}"),
                });
            }
            labels.push(v as usize);
        } else {
            let next = interned.len();
            labels.push(*interned.entry(text.to_string()).or_insert(next));
        }
    }
    Ok(labels)
}
