//! Local scale estimation and construction of (a)symmetric data
//! dissimilarities, including the harmonic-mean Riemannian fix.
//!
//! Scaling edge distances by a per-point σ_i makes the dissimilarities
//! direction-dependent: the transform applied to edge (i, j) depends on the
//! tail point i. The functions here either keep that asymmetry
//! ([`tsne_p`], [`umap_p`]) or repair it ([`symmetrise`], [`harmonic_fix`]).

use std::io::{Read, Write};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::DirectedProximityGraph;

/// Bisection bounds and budget for the σ solvers.
const SIGMA_LO: f64 = 1e-12;
const SIGMA_HI: f64 = 1e6;
const SIGMA_MAX_ITERS: usize = 100;
const SIGMA_TOL: f64 = 1e-5;

/// Per-point scale estimates. `rho` is the distance-to-nearest-neighbour
/// shift used by the UMAP transform and is zero for perplexity scales.
/// Rows whose target was unattainable (all-equal distances, infeasible
/// targets) are flagged in `degenerate`.
#[derive(Debug, Clone)]
pub struct LocalScales {
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// How the entries of an [`AsymDissimilarities`] are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Every nonempty row sums to 1.
    RowStochastic,
    /// All entries sum to 1.
    GlobalSum1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Asymmetric,
    Symmetric,
}

/// Sparse matrix of data dissimilarities p_ij ≥ 0 with p_ii absent.
///
/// Entries are stored row-wise sorted by column for deterministic iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymDissimilarities {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    normalization: Normalization,
    symmetry: Symmetry,
}

impl AsymDissimilarities {
    pub fn new(
        n: usize,
        mut rows: Vec<Vec<(usize, f64)>>,
        normalization: Normalization,
        symmetry: Symmetry,
    ) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            for &(j, p) in row.iter() {
                if j == i {
                    return Err(Error::invalid_param(format!("diagonal entry at {i}")));
                }
                if j >= n {
                    return Err(Error::invalid_param(format!("entry ({i}, {j}) out of range")));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid_param(format!(
                        "entry ({i}, {j}) has invalid value {p}"
                    )));
                }
            }
            row.sort_by_key(|&(j, _)| j);
        }
        let out = AsymDissimilarities {
            n,
            rows,
            normalization,
            symmetry,
        };
        out.check_normalization()?;
        Ok(out)
    }

    fn check_normalization(&self) -> Result<()> {
        match self.normalization {
            Normalization::None => {}
            Normalization::RowStochastic => {
                for (i, row) in self.rows.iter().enumerate() {
                    if row.is_empty() {
                        continue;
                    }
                    let s: f64 = row.iter().map(|&(_, p)| p).sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(Error::numerical(format!("row {i} sums to {s}, not 1")));
                    }
                }
            }
            Normalization::GlobalSum1 => {
                let s = self.total_sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::numerical(format!("total sum is {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn n_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Entry (i, j), treating absent entries as 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|idx| self.rows[i][idx].1)
            .unwrap_or(0.0)
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, p)| (i, j, p)))
    }

    pub fn total_sum(&self) -> f64 {
        self.iter_entries().map(|(_, _, p)| p).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, j, p) in self.iter_entries() {
            m[[i, j]] = p;
        }
        m
    }

    /// Rescale all entries by a constant, adjusting the normalization tag.
    pub fn scaled(&self, factor: f64, normalization: Normalization) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, p)| (j, p * factor)).collect())
            .collect();
        AsymDissimilarities::new(self.n, rows, normalization, self.symmetry)
    }

    /// Serialize in the shared edge-list text format.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#nodes {}", self.n)?;
        for (i, j, p) in self.iter_entries() {
            writeln!(w, "{i}\t{j}\t{p:.17e}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: Read>(r: R, normalization: Normalization, symmetry: Symmetry) -> Result<Self> {
        let g = DirectedProximityGraph::read_edge_list(r)?;
        let rows = (0..g.n_nodes())
            .map(|i| g.out_edges(i).to_vec())
            .collect();
        AsymDissimilarities::new(g.n_nodes(), rows, normalization, symmetry)
    }
}

/// Entropy (bits) of the row softmax of −d²/(2σ²), plus the probabilities.
fn row_entropy_bits(dists: &[f64], sigma: f64) -> f64 {
    // Shift by the minimum for numerical stability; softmax is shift-invariant.
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut z = 0.0;
    let mut weighted = 0.0;
    for &d in dists {
        let e = (-(d * d - min * min) * inv).exp();
        z += e;
        weighted += e * (d * d - min * min) * inv;
    }
    // H(P) in nats = ln z + (1/z)·Σ e·exponent, converted to bits.
    (z.ln() + weighted / z) / std::f64::consts::LN_2
}

/// Solve per-point σ_i so the conditional distribution over out-neighbours
/// has the requested perplexity (2^entropy), by bisection.
pub fn perplexity_scales(graph: &DirectedProximityGraph, perplexity: f64) -> Result<LocalScales> {
    let n = graph.n_nodes();
    if perplexity <= 0.0 {
        return Err(Error::invalid_param("perplexity must be positive"));
    }
    let per_row: Vec<Result<(f64, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = graph.out_edges(i).iter().map(|&(_, d)| d).collect();
            if dists.is_empty() {
                return Err(Error::invalid_param(format!("node {i} has no out-edges")));
            }
            if dists.iter().any(|d| !d.is_finite()) {
                return Err(Error::invalid_param(format!(
                    "node {i} has non-finite distances"
                )));
            }
            let k = dists.len();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max - min <= 1e-12 * max.max(1.0) {
                // All distances equal: the distribution is uniform and the
                // entropy is log₂(k) for every σ. Return the search midpoint
                // and flag the row.
                return Ok(((SIGMA_LO + SIGMA_HI) / 2.0, true));
            }
            if perplexity >= k as f64 {
                return Err(Error::invalid_param(format!(
                    "perplexity {perplexity} must be below the out-degree {k} of node {i}"
                )));
            }
            let target = perplexity.log2();
            let mut lo = SIGMA_LO;
            let mut hi = SIGMA_HI;
            let mut best = (f64::INFINITY, (lo + hi) / 2.0);
            for _ in 0..SIGMA_MAX_ITERS {
                let mid = (lo + hi) / 2.0;
                let h = row_entropy_bits(&dists, mid);
                let residual = (2f64.powf(h) - perplexity).abs();
                if residual < best.0 {
                    best = (residual, mid);
                }
                if residual <= SIGMA_TOL {
                    return Ok((mid, false));
                }
                // Entropy increases with σ.
                if h > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Err(Error::ScaleSolver {
                row: i,
                best_sigma: best.1,
                residual: best.0,
            })
        })
        .collect();

    let mut sigma = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for r in per_row {
        let (s, flag) = r?;
        sigma.push(s);
        degenerate.push(flag);
    }
    Ok(LocalScales {
        sigma,
        rho: vec![0.0; n],
        degenerate,
    })
}

/// UMAP local scales: ρ_i is the nearest out-distance and σ_i solves
/// `Σ_j exp(−max(0, d_ij − ρ_i)/σ_i) = log₂(k)` by bisection, clamped to
/// `[σ_min, σ_max]` with `σ_min = 10⁻³ × mean out-distance`.
pub fn umap_scales(graph: &DirectedProximityGraph, k: usize) -> Result<LocalScales> {
    let n = graph.n_nodes();
    if k == 0 {
        return Err(Error::invalid_param("k must be positive"));
    }
    let mut total_dist = 0.0;
    let mut total_edges = 0usize;
    for i in 0..n {
        if graph.out_degree(i) == 0 {
            return Err(Error::invalid_param(format!("node {i} has no out-edges")));
        }
        for &(_, d) in graph.out_edges(i) {
            total_dist += d;
            total_edges += 1;
        }
    }
    let sigma_min = 1e-3 * (total_dist / total_edges as f64);
    let sigma_max = SIGMA_HI;
    let target = (k as f64).log2();

    let per_row: Vec<(f64, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = graph.out_edges(i).iter().map(|&(_, d)| d).collect();
            let rho = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = dists.iter().map(|&d| (d - rho).max(0.0)).collect();
            let sum_at = |sigma: f64| -> f64 { shifted.iter().map(|&s| (-s / sigma).exp()).sum() };

            // The sum is increasing in σ with infimum = #zero-shift entries.
            let floor = shifted.iter().filter(|&&s| s <= 0.0).count() as f64;
            if target <= floor + SIGMA_TOL || sum_at(sigma_max) < target {
                let clamped = if target <= floor + SIGMA_TOL {
                    sigma_min
                } else {
                    sigma_max
                };
                return (rho, clamped, true);
            }
            let mut lo = SIGMA_LO;
            let mut hi = sigma_max;
            let mut mid = (lo + hi) / 2.0;
            for _ in 0..SIGMA_MAX_ITERS {
                mid = (lo + hi) / 2.0;
                let s = sum_at(mid);
                if (s - target).abs() <= SIGMA_TOL {
                    break;
                }
                if s > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (rho, mid.clamp(sigma_min, sigma_max), false)
        })
        .collect();

    let mut sigma = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for (r, s, flag) in per_row {
        rho.push(r);
        sigma.push(s);
        degenerate.push(flag);
    }
    Ok(LocalScales {
        sigma,
        rho,
        degenerate,
    })
}

/// Row softmax of −d²/(2σ_i²) over out-neighbours: the t-SNE conditional
/// distribution. Row-stochastic and asymmetric; support equals the graph.
pub fn tsne_p(graph: &DirectedProximityGraph, scales: &LocalScales) -> Result<AsymDissimilarities> {
    let n = graph.n_nodes();
    if scales.sigma.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scales.sigma.len(),
        });
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let sigma = scales.sigma[i];
            let edges = graph.out_edges(i);
            if edges.is_empty() {
                return Vec::new();
            }
            let min = edges.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
            let inv = 1.0 / (2.0 * sigma * sigma);
            let mut row: Vec<(usize, f64)> = edges
                .iter()
                .map(|&(j, d)| (j, (-(d * d - min * min) * inv).exp()))
                .collect();
            let z: f64 = row.iter().map(|&(_, e)| e).sum();
            for entry in row.iter_mut() {
                entry.1 /= z;
            }
            row
        })
        .collect();
    AsymDissimilarities::new(n, rows, Normalization::RowStochastic, Symmetry::Asymmetric)
}

/// UMAP membership strengths `exp(−max(0, d_ij − ρ_i)/σ_i) ∈ (0, 1]`.
pub fn umap_p(graph: &DirectedProximityGraph, scales: &LocalScales) -> Result<AsymDissimilarities> {
    let n = graph.n_nodes();
    if scales.sigma.len() != n || scales.rho.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scales.sigma.len(),
        });
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let sigma = scales.sigma[i];
            let rho = scales.rho[i];
            graph
                .out_edges(i)
                .iter()
                .map(|&(j, d)| (j, (-(d - rho).max(0.0) / sigma).exp()))
                .collect()
        })
        .collect();
    AsymDissimilarities::new(n, rows, Normalization::None, Symmetry::Asymmetric)
}

/// Wrap graph distances unchanged into a dissimilarity container.
pub fn raw_p(graph: &DirectedProximityGraph) -> Result<AsymDissimilarities> {
    let rows = (0..graph.n_nodes())
        .map(|i| graph.out_edges(i).to_vec())
        .collect();
    AsymDissimilarities::new(
        graph.n_nodes(),
        rows,
        Normalization::None,
        Symmetry::Asymmetric,
    )
}

/// Wrap a dense matrix (finite off-diagonal entries become entries).
pub fn raw_p_dense(matrix: &Array2<f64>) -> Result<AsymDissimilarities> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && matrix[[i, j]].is_finite())
                .map(|j| (j, matrix[[i, j]]))
                .collect()
        })
        .collect();
    AsymDissimilarities::new(n, rows, Normalization::None, Symmetry::Asymmetric)
}

/// Symmetrisation rules. Missing reverse entries are treated as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetriseRule {
    /// (p_ij + p_ji)/2 — classical MDS and Isomap.
    Mean,
    /// max(p_ij, p_ji).
    Max,
    /// (p_ij + p_ji)/(2N) — t-SNE's joint distribution, global sum 1.
    TsneMean,
    /// p_ij + p_ji − p_ij·p_ji — UMAP's probabilistic union.
    UmapFuzzyUnion,
}

/// Apply a symmetrisation rule over the union of supports.
pub fn symmetrise(p: &AsymDissimilarities, rule: SymmetriseRule) -> Result<AsymDissimilarities> {
    let n = p.n();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, pij) in p.iter_entries() {
        if i > j {
            continue; // handled from the (j, i) side
        }
        let pji = p.get(j, i);
        push_symmetric(&mut rows, i, j, combine(rule, pij, pji, n));
    }
    // Entries present only as (j, i) with j > i.
    for (j, i, pji) in p.iter_entries() {
        if j <= i {
            continue;
        }
        if p.get(i, j) == 0.0 && !rows[i].iter().any(|&(c, _)| c == j) {
            push_symmetric(&mut rows, i, j, combine(rule, 0.0, pji, n));
        }
    }
    // (p_ij + p_ji)/(2N) over row-stochastic input sums to exactly 1.
    let normalization = match (rule, p.normalization()) {
        (SymmetriseRule::TsneMean, Normalization::RowStochastic) => Normalization::GlobalSum1,
        _ => Normalization::None,
    };
    AsymDissimilarities::new(n, rows, normalization, Symmetry::Symmetric)
}

fn combine(rule: SymmetriseRule, pij: f64, pji: f64, n: usize) -> f64 {
    match rule {
        SymmetriseRule::Mean => (pij + pji) / 2.0,
        SymmetriseRule::Max => pij.max(pji),
        SymmetriseRule::TsneMean => (pij + pji) / (2.0 * n as f64),
        SymmetriseRule::UmapFuzzyUnion => pij + pji - pij * pji,
    }
}

fn push_symmetric(rows: &mut [Vec<(usize, f64)>], i: usize, j: usize, value: f64) {
    if value > 0.0 {
        rows[i].push((j, value));
        rows[j].push((i, value));
    }
}

/// Replace each edge weight by the harmonic-mean symmetric estimate
/// `½(1/σ_i + 1/σ_j)·d_ij`. Reciprocal pairs come out exactly symmetric.
pub fn harmonic_fix(
    graph: &DirectedProximityGraph,
    scales: &LocalScales,
) -> Result<DirectedProximityGraph> {
    let n = graph.n_nodes();
    if scales.sigma.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scales.sigma.len(),
        });
    }
    if scales.sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid_param("scales must be positive"));
    }
    graph.map_weights(|i, j, d| 0.5 * (1.0 / scales.sigma[i] + 1.0 / scales.sigma[j]) * d)
}

/// Asymmetry diagnostic: ‖P − Pᵀ‖_F / ‖P + Pᵀ‖_F over the union support.
/// Zero iff the entries are symmetric; 1 for fully one-sided support.
pub fn asymmetry_measure(p: &AsymDissimilarities) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j, pij) in p.iter_entries() {
        let pji = p.get(j, i);
        let diff = pij - pji;
        let sum = pij + pji;
        if i < j || pji == 0.0 {
            // Count each unordered pair once from each direction.
            num += 2.0 * diff * diff;
            den += 2.0 * sum * sum;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}
