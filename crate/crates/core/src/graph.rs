//! Directed proximity graphs: construction, geodesic extension, truncation,
//! and connectivity repair.
//!
//! Graphs are directed by construction (kNN edges need not be reciprocal —
//! the source of binary asymmetry), immutable once built, and cheap to share
//! across threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{BufRead, BufReader, Read, Write};

use ndarray::{Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Raw point cloud: N points in ℝⁿ, one row per point. All entries finite.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_param("data matrix has non-finite entries"));
        }
        Ok(DataMatrix { values })
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn euclidean(&self, i: usize, j: usize) -> f64 {
        let a = self.values.row(i);
        let b = self.values.row(j);
        let mut sq = 0.0;
        for k in 0..a.len() {
            let d = a[k] - b[k];
            sq += d * d;
        }
        sq.sqrt()
    }
}

/// Sparse directed weighted graph of point-to-point distances.
///
/// Out-edges are kept sorted by (distance, target index) so that iteration
/// order — and everything derived from it — is deterministic. Edges added by
/// [`connect_components`] are ordinary edges but are also recorded in
/// `connector_edges` for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedProximityGraph {
    n_nodes: usize,
    out_edges: Vec<Vec<(usize, f64)>>,
    connector_edges: Vec<(usize, usize)>,
}

impl DirectedProximityGraph {
    pub fn new(n_nodes: usize, mut out_edges: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if out_edges.len() != n_nodes {
            return Err(Error::DimensionMismatch {
                expected: n_nodes,
                got: out_edges.len(),
            });
        }
        for (i, edges) in out_edges.iter_mut().enumerate() {
            for &(j, d) in edges.iter() {
                if j == i {
                    return Err(Error::invalid_param(format!("self-edge at node {i}")));
                }
                if j >= n_nodes {
                    return Err(Error::invalid_param(format!(
                        "edge {i} -> {j} out of range for {n_nodes} nodes"
                    )));
                }
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::invalid_param(format!(
                        "edge {i} -> {j} has invalid distance {d}"
                    )));
                }
            }
            edges.sort_by(cmp_edge);
            edges.dedup_by_key(|e| e.0);
        }
        Ok(DirectedProximityGraph {
            n_nodes,
            out_edges,
            connector_edges: Vec::new(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out_edges[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_edges[i].len()
    }

    pub fn n_edges(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// Edges added by connectivity repair, for audit.
    pub fn connector_edges(&self) -> &[(usize, usize)] {
        &self.connector_edges
    }

    pub fn edge_weight(&self, i: usize, j: usize) -> Option<f64> {
        self.out_edges[i]
            .iter()
            .find(|&&(t, _)| t == j)
            .map(|&(_, d)| d)
    }

    /// Iterate all edges as (source, target, distance) in deterministic order.
    pub fn iter_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(i, edges)| edges.iter().map(move |&(j, d)| (i, j, d)))
    }

    /// Map every edge weight through `f`, preserving the edge set.
    pub fn map_weights(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        let out_edges = self
            .out_edges
            .iter()
            .enumerate()
            .map(|(i, edges)| edges.iter().map(|&(j, d)| (j, f(i, j, d))).collect())
            .collect();
        let mut g = DirectedProximityGraph::new(self.n_nodes, out_edges)?;
        g.connector_edges = self.connector_edges.clone();
        Ok(g)
    }

    /// Number of weakly connected components.
    pub fn weak_components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n_nodes];
        let mut undirected: Vec<Vec<usize>> = vec![Vec::new(); self.n_nodes];
        for (i, j, _) in self.iter_edges() {
            undirected[i].push(j);
            undirected[j].push(i);
        }
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.n_nodes {
            if comp[start] != usize::MAX {
                continue;
            }
            stack.push(start);
            comp[start] = next;
            while let Some(node) = stack.pop() {
                for &nb in &undirected[node] {
                    if comp[nb] == usize::MAX {
                        comp[nb] = next;
                        stack.push(nb);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Serialize as an edge list: header `#nodes N`, then `i<TAB>j<TAB>distance`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#nodes {}", self.n_nodes)?;
        for (i, j, d) in self.iter_edges() {
            writeln!(w, "{i}\t{j}\t{d:.17e}")?;
        }
        Ok(())
    }

    /// Parse the edge-list format produced by [`write_edge_list`](Self::write_edge_list).
    pub fn read_edge_list<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut n_nodes = None;
        let mut out_edges: Vec<Vec<(usize, f64)>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("#nodes") {
                let n: usize = rest.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad node count {rest:?}"),
                })?;
                n_nodes = Some(n);
                out_edges = vec![Vec::new(); n];
                continue;
            }
            let n = n_nodes.ok_or_else(|| Error::Parse {
                line: line_no,
                message: "edge before '#nodes N' header".into(),
            })?;
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 'i<TAB>j<TAB>distance', got {} fields", fields.len()),
                });
            }
            let i: usize = fields[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: "bad source index".into(),
            })?;
            let j: usize = fields[1].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: "bad target index".into(),
            })?;
            let d: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: "bad distance".into(),
            })?;
            if i >= n || j >= n {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("edge {i} -> {j} out of range for {n} nodes"),
                });
            }
            out_edges[i].push((j, d));
        }
        let n = n_nodes.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing '#nodes N' header".into(),
        })?;
        DirectedProximityGraph::new(n, out_edges)
    }
}

fn cmp_edge(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.partial_cmp(&b.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Exact k-nearest-neighbour graph under Euclidean distance.
///
/// Each node gets exactly `k` out-edges; ties are broken by lower index.
pub fn knn_exact(data: &DataMatrix, k: usize) -> Result<DirectedProximityGraph> {
    let n = data.n_points();
    if k == 0 || k >= n {
        return Err(Error::invalid_param(format!(
            "k = {k} must satisfy 1 <= k < N = {n}"
        )));
    }
    let out_edges: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, data.euclidean(i, j)))
                .collect();
            dists.sort_by(cmp_edge);
            dists.truncate(k);
            dists
        })
        .collect();
    DirectedProximityGraph::new(n, out_edges)
}

/// Approximate kNN graph by nearest-neighbour descent.
///
/// Starts from random neighbour lists and repeatedly lets neighbours of
/// neighbours propose improvements. Deterministic given `seed`. Intended
/// defaults: `max_iters = 10`, `sample_rate = 0.5`.
pub fn knn_descent(
    data: &DataMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    sample_rate: f64,
) -> Result<DirectedProximityGraph> {
    let n = data.n_points();
    if k == 0 || k >= n {
        return Err(Error::invalid_param(format!(
            "k = {k} must satisfy 1 <= k < N = {n}"
        )));
    }
    // Tiny inputs are cheaper exhaustively, and the descent needs room to mix.
    if n <= k + 1 || n <= 4 {
        return knn_exact(data, k);
    }
    if !(0.0..=1.0).contains(&sample_rate) {
        return Err(Error::invalid_param("sample_rate must lie in [0, 1]"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Neighbour lists: sorted (distance, index), flagged new/old.
    let mut lists: Vec<Vec<(usize, f64, bool)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut picks = Vec::with_capacity(k);
        let mut seen = vec![false; n];
        seen[i] = true;
        while picks.len() < k {
            let j = rng.gen_range(0..n);
            if !seen[j] {
                seen[j] = true;
                picks.push((j, data.euclidean(i, j), true));
            }
        }
        picks.sort_by(|a, b| cmp_edge(&(a.0, a.1), &(b.0, b.1)));
        lists.push(picks);
    }

    let max_candidates = k.max(1);
    for _ in 0..max_iters {
        // Sample new/old candidates per node, plus reverse candidates.
        let mut new_cand: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut old_cand: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for &(j, _, is_new) in &lists[i] {
                if is_new {
                    if new_cand[i].len() < max_candidates && rng.gen::<f64>() < sample_rate {
                        new_cand[i].push(j);
                    }
                    if new_cand[j].len() < max_candidates && rng.gen::<f64>() < sample_rate {
                        new_cand[j].push(i);
                    }
                } else {
                    if old_cand[i].len() < max_candidates {
                        old_cand[i].push(j);
                    }
                    if old_cand[j].len() < max_candidates {
                        old_cand[j].push(i);
                    }
                }
            }
        }
        for list in lists.iter_mut() {
            for entry in list.iter_mut() {
                entry.2 = false;
            }
        }

        let mut updates = 0usize;
        for i in 0..n {
            // Local join: candidates of i propose edges to each other. At
            // least one side of each pair must be new; old-old pairs were
            // already compared in earlier rounds.
            for (a_idx, &a) in new_cand[i].iter().enumerate() {
                for &b in new_cand[i].iter().skip(a_idx + 1) {
                    if a != b {
                        let d = data.euclidean(a, b);
                        updates += try_insert(&mut lists, a, b, d);
                        updates += try_insert(&mut lists, b, a, d);
                    }
                }
                for &b in &old_cand[i] {
                    if a != b {
                        let d = data.euclidean(a, b);
                        updates += try_insert(&mut lists, a, b, d);
                        updates += try_insert(&mut lists, b, a, d);
                    }
                }
            }
        }
        if updates == 0 {
            break;
        }
    }

    let out_edges: Vec<Vec<(usize, f64)>> = lists
        .into_iter()
        .map(|list| list.into_iter().map(|(j, d, _)| (j, d)).collect())
        .collect();
    DirectedProximityGraph::new(n, out_edges)
}

/// Insert candidate `j` into node `i`'s sorted neighbour list if it improves it.
fn try_insert(lists: &mut [Vec<(usize, f64, bool)>], i: usize, j: usize, d: f64) -> usize {
    if i == j {
        return 0;
    }
    let list = &mut lists[i];
    let worst = list.last().map(|&(_, wd, _)| wd).unwrap_or(f64::INFINITY);
    if d > worst || (d == worst && j >= list.last().map(|&(t, _, _)| t).unwrap_or(usize::MAX)) {
        return 0;
    }
    if list.iter().any(|&(t, _, _)| t == j) {
        return 0;
    }
    let pos = list
        .iter()
        .position(|&(t, dd, _)| cmp_edge(&(j, d), &(t, dd)) == Ordering::Less)
        .unwrap_or(list.len());
    list.insert(pos, (j, d, true));
    list.pop();
    1
}

/// Geodesic extension mode: full dense matrix or per-node truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicMode {
    /// Dense N×N matrix of directed shortest-path distances (∞ where unreachable).
    Full,
    /// Keep the `k⁺` smallest finite shortest-path distances per node.
    Truncate(usize),
}

/// Result of [`geodesic_extend`].
#[derive(Debug, Clone)]
pub enum Geodesics {
    Dense(Array2<f64>),
    Sparse(DirectedProximityGraph),
}

impl Geodesics {
    pub fn as_dense(&self) -> Option<&Array2<f64>> {
        match self {
            Geodesics::Dense(m) => Some(m),
            Geodesics::Sparse(_) => None,
        }
    }

    pub fn as_sparse(&self) -> Option<&DirectedProximityGraph> {
        match self {
            Geodesics::Sparse(g) => Some(g),
            Geodesics::Dense(_) => None,
        }
    }
}

/// Replace edge distances by directed shortest-path distances (Dijkstra per
/// source). `Full` materialises the dense N×N matrix — O(N²) memory, desk
/// scale only; `Truncate(k⁺)` keeps a sparse graph.
pub fn geodesic_extend(graph: &DirectedProximityGraph, mode: GeodesicMode) -> Result<Geodesics> {
    let n = graph.n_nodes();
    match mode {
        GeodesicMode::Full => {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|src| dijkstra(graph, src))
                .collect();
            let mut dense = Array2::from_elem((n, n), f64::INFINITY);
            for (i, row) in rows.into_iter().enumerate() {
                for (j, d) in row.into_iter().enumerate() {
                    dense[[i, j]] = d;
                }
            }
            Ok(Geodesics::Dense(dense))
        }
        GeodesicMode::Truncate(k_plus) => {
            if k_plus == 0 {
                return Err(Error::invalid_param("k⁺ must be positive"));
            }
            let out_edges: Vec<Vec<(usize, f64)>> = (0..n)
                .into_par_iter()
                .map(|src| {
                    let dists = dijkstra(graph, src);
                    let mut edges: Vec<(usize, f64)> = dists
                        .into_iter()
                        .enumerate()
                        .filter(|&(j, d)| j != src && d.is_finite())
                        .collect();
                    edges.sort_by(cmp_edge);
                    edges.truncate(k_plus);
                    edges
                })
                .collect();
            Ok(Geodesics::Sparse(DirectedProximityGraph::new(
                n, out_edges,
            )?))
        }
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (distance, node index).
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(graph: &DirectedProximityGraph, src: usize) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: src,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(next, w) in graph.out_edges(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(HeapEntry {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Make the graph weakly connected by greedily adding the closest Euclidean
/// pair of points between components, repeating until one component remains.
/// Added edges are bidirectional and recorded in `connector_edges`.
pub fn connect_components(
    graph: &DirectedProximityGraph,
    data: &DataMatrix,
) -> Result<DirectedProximityGraph> {
    let n = graph.n_nodes();
    if n != data.n_points() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data.n_points(),
        });
    }
    let comp = graph.weak_components();
    let n_comp = comp.iter().max().map(|&c| c + 1).unwrap_or(0);
    if n_comp <= 1 {
        return Ok(graph.clone());
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (node, &c) in comp.iter().enumerate() {
        members[c].push(node);
    }

    // Closest pair of points for every pair of components.
    let mut pair_min: Vec<Vec<(f64, usize, usize)>> =
        vec![vec![(f64::INFINITY, 0, 0); n_comp]; n_comp];
    for a in 0..n_comp {
        for b in (a + 1)..n_comp {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for &i in &members[a] {
                for &j in &members[b] {
                    let d = data.euclidean(i, j);
                    if d < best.0 || (d == best.0 && (i, j) < (best.1, best.2)) {
                        best = (d, i, j);
                    }
                }
            }
            pair_min[a][b] = best;
            pair_min[b][a] = (best.0, best.2, best.1);
        }
    }

    let mut out_edges = graph.out_edges.clone();
    let mut connector_edges = graph.connector_edges.clone();
    // Union-find over components, merging the globally closest pair each round.
    let mut parent: Vec<usize> = (0..n_comp).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let mut remaining = n_comp;
    while remaining > 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX, usize::MAX, usize::MAX);
        for a in 0..n_comp {
            if find(&mut parent, a) != a {
                continue;
            }
            for b in 0..n_comp {
                if b == a || find(&mut parent, b) != b || b < a {
                    continue;
                }
                let (d, i, j) = pair_min[a][b];
                if d < best.0 {
                    best = (d, i, j, a, b);
                }
            }
        }
        let (d, i, j, a, b) = best;
        out_edges[i].push((j, d));
        out_edges[i].sort_by(cmp_edge);
        out_edges[j].push((i, d));
        out_edges[j].sort_by(cmp_edge);
        connector_edges.push((i, j));

        // Merge b into a; keep the tighter inter-component minima.
        parent[b] = a;
        for c in 0..n_comp {
            if c == a || c == b {
                continue;
            }
            if pair_min[b][c].0 < pair_min[a][c].0 {
                pair_min[a][c] = pair_min[b][c];
                pair_min[c][a] = pair_min[c][b];
            }
        }
        remaining -= 1;
    }

    let mut g = DirectedProximityGraph::new(n, out_edges)?;
    g.connector_edges = connector_edges;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn data(rows: Vec<Vec<f64>>) -> DataMatrix {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        DataMatrix::new(Array2::from_shape_vec((n, d), flat).unwrap()).unwrap()
    }

    #[test]
    fn knn_collinear_points() {
        let d = data(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let g = knn_exact(&d, 1).unwrap();
        assert_eq!(g.out_edges(0), &[(1, 1.0)]);
        assert_eq!(g.out_edges(1), &[(0, 1.0)]);
        assert_eq!(g.out_edges(2), &[(1, 2.0)]);
    }

    #[test]
    fn knn_unit_square_prefers_sides() {
        // Brute-force check: side neighbours at distance 1 beat the √2 diagonal.
        let d = data(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ]);
        let g = knn_exact(&d, 2).unwrap();
        for i in 0..4 {
            let diagonal = (i + 2) % 4;
            for &(j, dist) in g.out_edges(i) {
                assert_ne!(j, diagonal);
                assert!((dist - 1.0).abs() < 1e-12);
            }
            assert_eq!(g.out_degree(i), 2);
        }
    }

    #[test]
    fn knn_complete_graph() {
        let d = data(vec![vec![0.0], vec![1.0], vec![2.5], vec![4.0]]);
        let g = knn_exact(&d, 3).unwrap();
        for i in 0..4 {
            assert_eq!(g.out_degree(i), 3);
        }
        assert!(knn_exact(&d, 4).is_err());
    }

    #[test]
    fn knn_tie_breaks_by_lower_index() {
        let d = data(vec![vec![0.0], vec![1.0], vec![-1.0]]);
        let g = knn_exact(&d, 1).unwrap();
        // Nodes 1 and 2 are both at distance 1 from node 0.
        assert_eq!(g.out_edges(0), &[(1, 1.0)]);
    }

    #[test]
    fn knn_permutation_equivariance() {
        let d = data(vec![vec![0.0, 0.1], vec![2.0, 0.3], vec![0.5, 2.0], vec![3.0, 3.0]]);
        let g = knn_exact(&d, 2).unwrap();
        // Relabel by reversing indices.
        let perm = [3usize, 2, 1, 0];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&p| d.values().row(p).to_vec()).collect();
        let dp = data(rows);
        let gp = knn_exact(&dp, 2).unwrap();
        for i in 0..4 {
            let mut expect: Vec<(usize, f64)> = g
                .out_edges(perm[i])
                .iter()
                .map(|&(j, dist)| (perm.iter().position(|&p| p == j).unwrap(), dist))
                .collect();
            expect.sort_by(cmp_edge);
            assert_eq!(gp.out_edges(i), expect.as_slice());
        }
    }

    fn gaussian_blob(n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        data(rows)
    }

    #[test]
    fn knn_descent_recall_against_exact() {
        let d = gaussian_blob(50, 99);
        let exact = knn_exact(&d, 5).unwrap();
        let approx = knn_descent(&d, 5, 0, 10, 0.5).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for i in 0..50 {
            let truth: Vec<usize> = exact.out_edges(i).iter().map(|&(j, _)| j).collect();
            for &(j, _) in approx.out_edges(i) {
                if truth.contains(&j) {
                    hits += 1;
                }
            }
            total += truth.len();
        }
        let recall = hits as f64 / total as f64;
        assert!(recall >= 0.95, "recall {recall} below 0.95");
    }

    #[test]
    fn knn_descent_small_input_falls_back_to_exact() {
        let d = data(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let approx = knn_descent(&d, 2, 7, 10, 0.5).unwrap();
        let exact = knn_exact(&d, 2).unwrap();
        assert_eq!(approx, exact);
    }

    #[test]
    fn knn_descent_deterministic() {
        let d = gaussian_blob(40, 5);
        let a = knn_descent(&d, 4, 123, 10, 0.5).unwrap();
        let b = knn_descent(&d, 4, 123, 10, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geodesic_chain() {
        let g = DirectedProximityGraph::new(3, vec![vec![(1, 1.0)], vec![(2, 2.0)], vec![]])
            .unwrap();
        let dense = match geodesic_extend(&g, GeodesicMode::Full).unwrap() {
            Geodesics::Dense(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(dense[[0, 2]], 3.0);
        assert_eq!(dense[[2, 0]], f64::INFINITY);
        assert_eq!(dense[[0, 0]], 0.0);
    }

    #[test]
    fn geodesic_relaxes_heavy_edge() {
        let g = DirectedProximityGraph::new(
            3,
            vec![
                vec![(1, 1.0), (2, 3.0)],
                vec![(0, 1.0), (2, 1.0)],
                vec![(0, 3.0), (1, 1.0)],
            ],
        )
        .unwrap();
        let dense = match geodesic_extend(&g, GeodesicMode::Full).unwrap() {
            Geodesics::Dense(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(dense[[0, 2]], 2.0);
        assert_eq!(dense[[2, 0]], 2.0);
    }

    fn floyd_warshall(g: &DirectedProximityGraph) -> Array2<f64> {
        let n = g.n_nodes();
        let mut d = Array2::from_elem((n, n), f64::INFINITY);
        for i in 0..n {
            d[[i, i]] = 0.0;
        }
        for (i, j, w) in g.iter_edges() {
            if w < d[[i, j]] {
                d[[i, j]] = w;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[[i, k]] + d[[k, j]];
                    if via < d[[i, j]] {
                        d[[i, j]] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn geodesic_matches_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20;
        let mut out_edges = vec![Vec::new(); n];
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    out_edges[i].push((j, rng.gen_range(0.1..2.0)));
                }
            }
        }
        let g = DirectedProximityGraph::new(n, out_edges).unwrap();
        let dense = match geodesic_extend(&g, GeodesicMode::Full).unwrap() {
            Geodesics::Dense(m) => m,
            _ => unreachable!(),
        };
        let oracle = floyd_warshall(&g);
        for (a, b) in dense.iter().zip(oracle.iter()) {
            if a.is_finite() || b.is_finite() {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn geodesic_triangle_inequality_and_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 15;
        let mut out_edges = vec![Vec::new(); n];
        for i in 0..n {
            for _ in 0..4 {
                let j = rng.gen_range(0..n);
                if j != i && !out_edges[i].iter().any(|&(t, _)| t == j) {
                    out_edges[i].push((j, rng.gen_range(0.1..2.0)));
                }
            }
        }
        let g = DirectedProximityGraph::new(n, out_edges).unwrap();
        let dense = match geodesic_extend(&g, GeodesicMode::Full).unwrap() {
            Geodesics::Dense(m) => m,
            _ => unreachable!(),
        };
        for (i, j, w) in g.iter_edges() {
            assert!(dense[[i, j]] <= w + 1e-12);
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dense[[i, j]].is_finite() && dense[[j, k]].is_finite() {
                        assert!(dense[[i, k]] <= dense[[i, j]] + dense[[j, k]] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_truncation_keeps_smallest() {
        let d = data(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let g = knn_exact(&d, 2).unwrap();
        let sparse = match geodesic_extend(&g, GeodesicMode::Truncate(3)).unwrap() {
            Geodesics::Sparse(s) => s,
            _ => unreachable!(),
        };
        for i in 0..5 {
            assert!(sparse.out_degree(i) <= 3);
            // Truncation keeps the k⁺ nearest reachable targets.
            let dists: Vec<f64> = sparse.out_edges(i).iter().map(|&(_, d)| d).collect();
            for w in dists.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn connect_already_connected_is_identity() {
        let d = data(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let g = knn_exact(&d, 2).unwrap();
        let c = connect_components(&g, &d).unwrap();
        assert_eq!(g, c);
        assert!(c.connector_edges().is_empty());
    }

    #[test]
    fn connect_two_clusters_via_closest_pair() {
        let d = data(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ]);
        let g = DirectedProximityGraph::new(
            4,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(3, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let c = connect_components(&g, &d).unwrap();
        assert_eq!(c.connector_edges().len(), 1);
        let (i, j) = c.connector_edges()[0];
        let w = c.edge_weight(i, j).unwrap();
        assert_eq!(w, 10.0);
        assert_eq!(c.edge_weight(j, i), Some(10.0));
        let comp = c.weak_components();
        assert!(comp.iter().all(|&x| x == 0));
    }

    #[test]
    fn connect_three_singletons_greedy_order() {
        let d = data(vec![vec![0.0], vec![1.0], vec![5.0]]);
        let g = DirectedProximityGraph::new(3, vec![vec![], vec![], vec![]]).unwrap();
        let c = connect_components(&g, &d).unwrap();
        // First merge 0↔1 (distance 1), then {0,1}↔2 via point 1 (distance 4).
        assert_eq!(c.connector_edges(), &[(0, 1), (1, 2)]);
        assert_eq!(c.edge_weight(0, 1), Some(1.0));
        assert_eq!(c.edge_weight(1, 2), Some(4.0));
        assert_eq!(c.edge_weight(2, 1), Some(4.0));
        assert_eq!(c.edge_weight(0, 2), None);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = DirectedProximityGraph::new(
            3,
            vec![vec![(1, 1.5), (2, std::f64::consts::PI)], vec![(2, 0.25)], vec![]],
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let parsed = DirectedProximityGraph::read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(g.n_nodes(), parsed.n_nodes());
        let a: Vec<_> = g.iter_edges().collect();
        let b: Vec<_> = parsed.iter_edges().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_list_parse_errors_carry_line_numbers() {
        let bad = "#nodes 2\n0\tx\t1.0\n";
        match DirectedProximityGraph::read_edge_list(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let no_header = "0\t1\t1.0\n";
        assert!(matches!(
            DirectedProximityGraph::read_edge_list(no_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(DirectedProximityGraph::new(2, vec![vec![(0, 1.0)], vec![]]).is_err());
        assert!(DirectedProximityGraph::new(2, vec![vec![(1, -1.0)], vec![]]).is_err());
        assert!(DirectedProximityGraph::new(2, vec![vec![(5, 1.0)], vec![]]).is_err());
        let _ = array![[0.0]];
    }
}
