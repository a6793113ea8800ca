//! kMeans clustering and the evaluation scores: label-related agreement
//! measures (AMI, ARI, NMI, HOM, COM, V-M, FMI), label-free cluster-shape
//! scores (SIL, DBI, CHI), and repeated stratified k-NN cross-validation.
//!
//! All scores operate on raw embedding coordinates with plain Euclidean
//! geometry, Randers embeddings included.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named scores plus the run context they were computed in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: BTreeMap<String, f64>,
    pub metadata: ScoreMetadata,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreMetadata {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub omega_norm: f64,
    pub dim: usize,
}

/// Lloyd's algorithm with k-means++ seeding, best of `n_init` restarts.
///
/// Ties (seeding, assignment) break toward lower index, so the result is
/// deterministic given the seed. Emptied clusters are re-seeded from the
/// point farthest from its assigned centroid.
pub fn kmeans(coords: &Array2<f64>, k: usize, seed: u64, n_init: usize) -> Result<Vec<usize>> {
    let n = coords.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid_param(format!(
            "k = {k} must lie in [1, N = {n}]"
        )));
    }
    if n_init == 0 {
        return Err(Error::invalid_param("n_init must be positive"));
    }
    let runs: Vec<(f64, Vec<usize>)> = (0..n_init)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
            lloyd(coords, k, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    Ok(best.1)
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

fn lloyd(coords: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = coords.nrows();
    let m = coords.ncols();

    // k-means++ seeding.
    let mut centroids = Array2::zeros((k, m));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&coords.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(coords.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&coords.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(coords.row(i), centroids.row(c)));
        }
    }

    let mut assign = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..300 {
        // Assignment step.
        for i in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..k {
                let d = sq_dist(coords.row(i), centroids.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
        }
        // Re-seed emptied clusters from the farthest point.
        loop {
            let mut counts = vec![0usize; k];
            for &a in &assign {
                counts[a] += 1;
            }
            let empty = (0..k).find(|&c| counts[c] == 0);
            let Some(empty) = empty else { break };
            let farthest = (0..n)
                .max_by(|&i, &j| {
                    let di = sq_dist(coords.row(i), centroids.row(assign[i]));
                    let dj = sq_dist(coords.row(j), centroids.row(assign[j]));
                    di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            centroids.row_mut(empty).assign(&coords.row(farthest));
            assign[farthest] = empty;
        }
        // Update step.
        let mut sums = Array2::<f64>::zeros((k, m));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for d in 0..m {
                sums[[assign[i], d]] += coords[[i, d]];
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..m {
                let new = sums[[c, d]] / counts[c] as f64;
                shift = shift.max((new - centroids[[c, d]]).abs());
                centroids[[c, d]] = new;
            }
        }
        let new_inertia: f64 = (0..n)
            .map(|i| sq_dist(coords.row(i), centroids.row(assign[i])))
            .sum();
        let done = shift <= 1e-12 || (inertia - new_inertia).abs() <= 1e-12 * (1.0 + new_inertia);
        inertia = new_inertia;
        if done {
            break;
        }
    }
    (inertia, assign)
}

struct Contingency {
    table: Vec<Vec<usize>>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
    n: usize,
}

fn contingency(truth: &[usize], pred: &[usize]) -> Result<Contingency> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid_param("empty labelings"));
    }
    let r = truth.iter().max().unwrap() + 1;
    let c = pred.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; c]; r];
    for (&t, &p) in truth.iter().zip(pred.iter()) {
        table[t][p] += 1;
    }
    let row_sums: Vec<usize> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    Ok(Contingency {
        table,
        row_sums,
        col_sums,
        n: truth.len(),
    })
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(ct: &Contingency) -> f64 {
    let n = ct.n as f64;
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * ((n * nij) / (ct.row_sums[i] as f64 * ct.col_sums[j] as f64)).ln();
        }
    }
    mi.max(0.0)
}

fn ln_factorial(x: usize) -> f64 {
    ln_gamma(x as f64 + 1.0)
}

/// Lanczos approximation of ln Γ(x) for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Expected mutual information under the hypergeometric null that fixes
/// both marginals.
fn expected_mutual_information(ct: &Contingency) -> f64 {
    let n = ct.n;
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &ct.row_sums {
        for &b in &ct.col_sums {
            if a == 0 || b == 0 {
                continue;
            }
            let start = 1.max((a + b).saturating_sub(n));
            let end = a.min(b);
            for nij in start..=end {
                let nij_f = nij as f64;
                let term = nij_f / nf * ((nf * nij_f) / (a as f64 * b as f64)).ln();
                // Hypergeometric log-probability of the cell value.
                let log_prob = ln_factorial(a) + ln_factorial(b) + ln_factorial(n - a)
                    + ln_factorial(n - b)
                    - ln_factorial(n)
                    - ln_factorial(nij)
                    - ln_factorial(a - nij)
                    - ln_factorial(b - nij)
                    - ln_factorial(n - a - b + nij);
                emi += term * log_prob.exp();
            }
        }
    }
    emi
}

/// Adjusted Mutual Information with the max-entropy normaliser and
/// hypergeometric expected MI.
pub fn score_ami(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let h_u = entropy(&ct.row_sums, ct.n);
    let h_v = entropy(&ct.col_sums, ct.n);
    if h_u == 0.0 && h_v == 0.0 {
        return Ok(1.0);
    }
    let mi = mutual_information(&ct);
    let emi = expected_mutual_information(&ct);
    let mut denom = h_u.max(h_v) - emi;
    if denom.abs() < f64::EPSILON {
        denom = if denom >= 0.0 { f64::EPSILON } else { -f64::EPSILON };
    }
    Ok((mi - emi) / denom)
}

/// Adjusted Rand Index (pair-counting, chance-corrected).
pub fn score_ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let comb2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = ct.table.iter().flatten().map(|&nij| comb2(nij)).sum();
    let sum_a: f64 = ct.row_sums.iter().map(|&a| comb2(a)).sum();
    let sum_b: f64 = ct.col_sums.iter().map(|&b| comb2(b)).sum();
    let total = comb2(ct.n);
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-300 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Normalized Mutual Information with the arithmetic-mean normaliser
/// (identical to V-Measure by construction).
pub fn score_nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let h_u = entropy(&ct.row_sums, ct.n);
    let h_v = entropy(&ct.col_sums, ct.n);
    if h_u == 0.0 && h_v == 0.0 {
        return Ok(1.0);
    }
    let mean = (h_u + h_v) / 2.0;
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok((mutual_information(&ct) / mean).clamp(0.0, 1.0))
}

/// Homogeneity: each cluster contains members of a single class.
pub fn score_homogeneity(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let h_c = entropy(&ct.row_sums, ct.n);
    if h_c == 0.0 {
        return Ok(1.0);
    }
    Ok((mutual_information(&ct) / h_c).clamp(0.0, 1.0))
}

/// Completeness: all members of a class land in the same cluster.
pub fn score_completeness(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let h_k = entropy(&ct.col_sums, ct.n);
    if h_k == 0.0 {
        return Ok(1.0);
    }
    Ok((mutual_information(&ct) / h_k).clamp(0.0, 1.0))
}

/// V-Measure: harmonic mean of homogeneity and completeness.
pub fn score_vmeasure(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let h = score_homogeneity(truth, pred)?;
    let c = score_completeness(truth, pred)?;
    if h + c == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * h * c / (h + c))
}

/// Fowlkes–Mallows Index: geometric mean of pairwise precision and recall.
pub fn score_fmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = contingency(truth, pred)?;
    let n = ct.n as f64;
    let tk: f64 = ct
        .table
        .iter()
        .flatten()
        .map(|&nij| (nij * nij) as f64)
        .sum::<f64>()
        - n;
    let pk: f64 = ct.col_sums.iter().map(|&b| (b * b) as f64).sum::<f64>() - n;
    let qk: f64 = ct.row_sums.iter().map(|&a| (a * a) as f64).sum::<f64>() - n;
    if tk == 0.0 || pk == 0.0 || qk == 0.0 {
        return Ok(0.0);
    }
    Ok(((tk / pk) * (tk / qk)).sqrt())
}

fn cluster_members(pred: &[usize]) -> Result<Vec<Vec<usize>>> {
    let k = pred.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in pred.iter().enumerate() {
        members[c].push(i);
    }
    if members.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(Error::invalid_param(
            "shape scores need at least two nonempty clusters",
        ));
    }
    if members.iter().any(Vec::is_empty) {
        return Err(Error::invalid_param("cluster ids must be contiguous"));
    }
    Ok(members)
}

/// Mean silhouette coefficient over all samples.
pub fn score_silhouette(coords: &Array2<f64>, pred: &[usize]) -> Result<f64> {
    let n = coords.nrows();
    if pred.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pred.len(),
        });
    }
    let members = cluster_members(pred)?;
    let mut total = 0.0;
    for i in 0..n {
        let own = pred[i];
        if members[own].len() == 1 {
            continue; // singleton clusters contribute 0
        }
        let mut a = 0.0;
        for &j in &members[own] {
            if j != i {
                a += sq_dist(coords.row(i), coords.row(j)).sqrt();
            }
        }
        a /= (members[own].len() - 1) as f64;
        let mut b = f64::INFINITY;
        for (c, group) in members.iter().enumerate() {
            if c == own {
                continue;
            }
            let mean: f64 = group
                .iter()
                .map(|&j| sq_dist(coords.row(i), coords.row(j)).sqrt())
                .sum::<f64>()
                / group.len() as f64;
            b = b.min(mean);
        }
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// Davies–Bouldin index (lower is better).
pub fn score_dbi(coords: &Array2<f64>, pred: &[usize]) -> Result<f64> {
    let members = cluster_members(pred)?;
    let m = coords.ncols();
    let k = members.len();
    let mut centroids = Array2::zeros((k, m));
    let mut scatter = vec![0.0f64; k];
    for (c, group) in members.iter().enumerate() {
        for &i in group {
            for d in 0..m {
                centroids[[c, d]] += coords[[i, d]];
            }
        }
        for d in 0..m {
            centroids[[c, d]] /= group.len() as f64;
        }
        scatter[c] = group
            .iter()
            .map(|&i| sq_dist(coords.row(i), centroids.row(c)).sqrt())
            .sum::<f64>()
            / group.len() as f64;
    }
    let mut dbi = 0.0;
    for c in 0..k {
        let mut worst = 0.0f64;
        for l in 0..k {
            if l == c {
                continue;
            }
            let sep = sq_dist(centroids.row(c), centroids.row(l)).sqrt();
            if sep > 0.0 {
                worst = worst.max((scatter[c] + scatter[l]) / sep);
            }
        }
        dbi += worst;
    }
    Ok(dbi / k as f64)
}

/// Calinski–Harabasz index (higher is better).
pub fn score_chi(coords: &Array2<f64>, pred: &[usize]) -> Result<f64> {
    let members = cluster_members(pred)?;
    let n = coords.nrows();
    let m = coords.ncols();
    let k = members.len();
    let global = coords.mean_axis(ndarray::Axis(0)).unwrap();
    let mut between = 0.0;
    let mut within = 0.0;
    for group in &members {
        let mut centroid = Array1::<f64>::zeros(m);
        for &i in group {
            for d in 0..m {
                centroid[d] += coords[[i, d]];
            }
        }
        centroid.mapv_inplace(|x| x / group.len() as f64);
        between += group.len() as f64 * sq_dist(centroid.view(), global.view());
        for &i in group {
            within += sq_dist(coords.row(i), centroid.view());
        }
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Mean accuracy of a k-NN classifier under repeated stratified K-fold
/// cross-validation (defaults: 5-NN, 5 folds, 2 repeats → 10 evaluations).
pub fn knn_cv_accuracy(
    coords: &Array2<f64>,
    labels: &[usize],
    k_nn: usize,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    let n = coords.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if folds < 2 || k_nn == 0 || repeats == 0 {
        return Err(Error::invalid_param("need folds ≥ 2, k ≥ 1, repeats ≥ 1"));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, group) in by_class.iter().enumerate() {
        if !group.is_empty() && group.len() < folds {
            return Err(Error::invalid_param(format!(
                "class {c} has {} members, fewer than {folds} folds",
                group.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accuracies = Vec::with_capacity(folds * repeats);
    for _ in 0..repeats {
        // Stratified folds: shuffle within each class, deal round-robin.
        let mut fold_of = vec![0usize; n];
        for group in &by_class {
            let mut shuffled = group.clone();
            shuffled.shuffle(&mut rng);
            for (pos, &i) in shuffled.iter().enumerate() {
                fold_of[i] = pos % folds;
            }
        }
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let correct = test
                .iter()
                .filter(|&&i| {
                    knn_classify(coords, labels, &train, i, k_nn, n_classes) == labels[i]
                })
                .count();
            accuracies.push(correct as f64 / test.len() as f64);
        }
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

fn knn_classify(
    coords: &Array2<f64>,
    labels: &[usize],
    train: &[usize],
    query: usize,
    k: usize,
    n_classes: usize,
) -> usize {
    let mut dists: Vec<(f64, usize)> = train
        .iter()
        .map(|&j| (sq_dist(coords.row(query), coords.row(j)), j))
        .collect();
    dists.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let mut votes = vec![0usize; n_classes];
    for &(_, j) in dists.iter().take(k.min(dists.len())) {
        votes[labels[j]] += 1;
    }
    // Majority vote, ties toward the smaller label id.
    let mut best = 0;
    for c in 1..n_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best
}

/// Compute every score of the evaluation harness in one pass.
pub fn full_report(
    coords: &Array2<f64>,
    truth: &[usize],
    pred: &[usize],
    metadata: ScoreMetadata,
) -> Result<ScoreReport> {
    let mut scores = BTreeMap::new();
    scores.insert("ami".into(), score_ami(truth, pred)?);
    scores.insert("ari".into(), score_ari(truth, pred)?);
    scores.insert("nmi".into(), score_nmi(truth, pred)?);
    scores.insert("hom".into(), score_homogeneity(truth, pred)?);
    scores.insert("com".into(), score_completeness(truth, pred)?);
    scores.insert("vmeasure".into(), score_vmeasure(truth, pred)?);
    scores.insert("fmi".into(), score_fmi(truth, pred)?);
    scores.insert("sil".into(), score_silhouette(coords, pred)?);
    scores.insert("dbi".into(), score_dbi(coords, pred)?);
    scores.insert("chi".into(), score_chi(coords, pred)?);
    Ok(ScoreReport { scores, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_partitions_score_one() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        for f in [
            score_ami, score_ari, score_nmi, score_homogeneity, score_completeness,
            score_vmeasure, score_fmi,
        ] {
            let v = f(&truth, &truth).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn relabeling_is_invariant() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![1, 1, 0, 0];
        for f in [
            score_ami, score_ari, score_nmi, score_homogeneity, score_completeness,
            score_vmeasure, score_fmi,
        ] {
            let v = f(&truth, &pred).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn constant_prediction_hand_contingency() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert!(score_ari(&truth, &pred).unwrap().abs() < 1e-12);
        assert!(score_homogeneity(&truth, &pred).unwrap().abs() < 1e-12);
        assert!((score_completeness(&truth, &pred).unwrap() - 1.0).abs() < 1e-12);
        assert!(score_vmeasure(&truth, &pred).unwrap().abs() < 1e-12);
    }

    #[test]
    fn vmeasure_is_harmonic_mean_identity() {
        let truth = vec![0, 0, 1, 1, 2, 2, 0, 1];
        let pred = vec![0, 1, 1, 1, 2, 0, 0, 2];
        let h = score_homogeneity(&truth, &pred).unwrap();
        let c = score_completeness(&truth, &pred).unwrap();
        let v = score_vmeasure(&truth, &pred).unwrap();
        assert!((v - 2.0 * h * c / (h + c)).abs() < 1e-12);
        // And NMI with the arithmetic normaliser coincides with V-M.
        let nmi = score_nmi(&truth, &pred).unwrap();
        assert!((v - nmi).abs() < 1e-12);
    }

    #[test]
    fn ami_ari_zero_mean_under_permutation_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let mut pred = truth.clone();
        let mut ami_sum = 0.0;
        let mut ari_sum = 0.0;
        let shuffles = 200;
        for _ in 0..shuffles {
            pred.shuffle(&mut rng);
            ami_sum += score_ami(&truth, &pred).unwrap();
            ari_sum += score_ari(&truth, &pred).unwrap();
        }
        assert!((ami_sum / shuffles as f64).abs() <= 0.05);
        assert!((ari_sum / shuffles as f64).abs() <= 0.05);
    }

    #[test]
    fn silhouette_hand_computed() {
        let coords = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let pred = vec![0, 0, 1, 1];
        let s = score_silhouette(&coords, &pred).unwrap();
        // a = 1; b = (10 + √101)/2 for every point.
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        let expected = (b - 1.0) / b;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.900).abs() < 1e-3);
    }

    #[test]
    fn dbi_zero_for_coincident_clusters() {
        let coords = array![[0.0, 0.0], [0.0, 0.0], [9.0, 9.0], [9.0, 9.0]];
        let pred = vec![0, 0, 1, 1];
        assert!(score_dbi(&coords, &pred).unwrap() < 1e-12);
    }

    #[test]
    fn chi_grows_with_separation() {
        let near = array![[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]];
        let far = array![[0.0, 0.0], [0.0, 1.0], [30.0, 0.0], [30.0, 1.0]];
        let pred = vec![0, 0, 1, 1];
        let chi_near = score_chi(&near, &pred).unwrap();
        let chi_far = score_chi(&far, &pred).unwrap();
        assert!(chi_far > chi_near);
    }

    #[test]
    fn shape_scores_reject_single_cluster() {
        let coords = array![[0.0], [1.0], [2.0]];
        let pred = vec![0, 0, 0];
        assert!(score_silhouette(&coords, &pred).is_err());
        assert!(score_dbi(&coords, &pred).is_err());
        assert!(score_chi(&coords, &pred).is_err());
    }

    #[test]
    fn kmeans_separated_pairs() {
        let coords = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let labels = kmeans(&coords, 2, 0, 10).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn kmeans_k_equals_n_gives_zero_inertia() {
        let coords = array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]];
        let labels = kmeans(&coords, 3, 1, 5).unwrap();
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn kmeans_beats_random_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for c in 0..3 {
            for _ in 0..15 {
                rows.push(vec![
                    c as f64 * 6.0 + rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]);
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let coords = Array2::from_shape_vec((45, 2), flat).unwrap();
        let labels = kmeans(&coords, 3, 0, 10).unwrap();
        let inertia_of = |assign: &[usize]| -> f64 {
            let mut sums = Array2::<f64>::zeros((3, 2));
            let mut counts = [0usize; 3];
            for (i, &c) in assign.iter().enumerate() {
                counts[c] += 1;
                for d in 0..2 {
                    sums[[c, d]] += coords[[i, d]];
                }
            }
            let mut acc = 0.0;
            for (i, &c) in assign.iter().enumerate() {
                for d in 0..2 {
                    let centroid = sums[[c, d]] / counts[c].max(1) as f64;
                    let diff = coords[[i, d]] - centroid;
                    acc += diff * diff;
                }
            }
            acc
        };
        let ours = inertia_of(&labels);
        for _ in 0..100 {
            let random: Vec<usize> = (0..45).map(|_| rng.gen_range(0..3)).collect();
            assert!(ours <= inertia_of(&random) + 1e-9);
        }
    }

    #[test]
    fn kmeans_empty_cluster_reseeded() {
        // Duplicate points force degenerate seeding; the run must still
        // produce k nonempty clusters when k distinct points exist.
        let coords = array![[0.0], [0.0], [0.0], [1.0], [2.0]];
        let labels = kmeans(&coords, 3, 0, 10).unwrap();
        let mut counts = [0usize; 3];
        for &l in &labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn knn_cv_perfectly_separated() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for i in 0..10 {
                rows.push(vec![c as f64 * 20.0 + i as f64 * 0.01, 0.0]);
                labels.push(c);
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let coords = Array2::from_shape_vec((20, 2), flat).unwrap();
        let acc = knn_cv_accuracy(&coords, &labels, 5, 5, 2, 0).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn knn_cv_chance_level_for_random_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coords = Array2::from_shape_fn((80, 2), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..80).map(|i| i % 2).collect();
        let acc = knn_cv_accuracy(&coords, &labels, 5, 5, 2, 1).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
    }

    #[test]
    fn knn_cv_deterministic_and_strict_on_tiny_classes() {
        let coords = array![[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        assert!(knn_cv_accuracy(&coords, &labels, 3, 5, 2, 0).is_err());
        let a = knn_cv_accuracy(&coords, &labels, 1, 3, 2, 7).unwrap();
        let b = knn_cv_accuracy(&coords, &labels, 1, 3, 2, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_serializes_within_ranges() {
        let coords = array![[0.0, 0.0], [0.0, 1.0], [8.0, 0.0], [8.0, 1.0]];
        let truth = vec![0, 0, 1, 1];
        let pred = kmeans(&coords, 2, 0, 5).unwrap();
        let report = full_report(&coords, &truth, &pred, ScoreMetadata::default()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"ami\""));
        for (name, value) in &report.scores {
            match name.as_str() {
                "ami" | "ari" | "sil" => assert!((-1.0..=1.0).contains(value)),
                "nmi" | "hom" | "com" | "vmeasure" | "fmi" => {
                    assert!((0.0..=1.0).contains(value))
                }
                "dbi" | "chi" => assert!(*value >= 0.0),
                _ => {}
            }
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..15usize {
            fact *= n as f64;
            assert!((ln_factorial(n) - fact.ln()).abs() < 1e-9);
        }
    }
}
