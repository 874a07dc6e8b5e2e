//! Kernel construction from feature vectors and graphs, plus the file
//! formats the CLI reads and writes.
//!
//! Vector data gets a linear or Gaussian kernel with identity weights. Graph
//! data uses the weighted-kernel construction equivalent to normalized cut:
//! `W = diag(degrees)` and `K = W^-1 A W^-1 + delta W^-1`, so that minimizing
//! the clustering objective minimizes the normalized cut of the assignment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{NeoError, Result};
use crate::model::KernelProblem;

/// Feature vectors, one row per point, with optional ground-truth clusters.
///
/// Ground-truth clusters may overlap and need not cover every point; indices
/// are 0-based in memory (the on-disk format is 1-based).
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    ground_truth: Option<Vec<Vec<usize>>>,
}

impl Dataset {
    /// Wraps a feature matrix, rejecting non-finite entries and empty data.
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(NeoError::InvalidData("feature matrix is empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeoError::InvalidData(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            x,
            ground_truth: None,
        })
    }

    /// Attaches ground-truth clusters (0-based indices, each set nonempty).
    pub fn with_ground_truth(mut self, clusters: Vec<Vec<usize>>) -> Result<Self> {
        validate_clusters(&clusters, self.n())?;
        self.ground_truth = Some(clusters);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn ground_truth(&self) -> Option<&[Vec<usize>]> {
        self.ground_truth.as_deref()
    }

    /// The Gram matrix `K = X X'`.
    pub fn linear_kernel(&self) -> Array2<f64> {
        self.x.dot(&self.x.t())
    }

    /// The Gaussian kernel `K_ij = exp(-||x_i - x_j||^2 / (2 h^2))`.
    pub fn gaussian_kernel(&self, bandwidth: f64) -> Array2<f64> {
        assert!(
            bandwidth > 0.0 && bandwidth.is_finite(),
            "bandwidth must be positive"
        );
        let n = self.n();
        let inv = 1.0 / (2.0 * bandwidth * bandwidth);
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            k[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let mut sq = 0.0;
                for t in 0..self.dim() {
                    let diff = self.x[(i, t)] - self.x[(j, t)];
                    sq += diff * diff;
                }
                let v = (-sq * inv).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Kernel choice for vector data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Linear,
    Gaussian { bandwidth: f64 },
}

/// Builds a [`KernelProblem`] from vector data with identity weights.
pub fn kernel_from_data(
    data: &Dataset,
    kind: KernelKind,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<KernelProblem> {
    let kernel = match kind {
        KernelKind::Linear => data.linear_kernel(),
        KernelKind::Gaussian { bandwidth } => {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(NeoError::InvalidParameter(format!(
                    "gaussian bandwidth must be positive, got {bandwidth}"
                )));
            }
            data.gaussian_kernel(bandwidth)
        }
    };
    KernelProblem::new(kernel, Array1::ones(data.n()), k, alpha, beta)
}

/// Undirected weighted graph with precomputed degrees.
///
/// The adjacency matrix is stored dense; every instance this crate targets
/// turns it into a dense kernel anyway.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Array2<f64>,
    degrees: Array1<f64>,
}

impl Graph {
    /// Wraps an adjacency matrix, checking symmetry and nonnegativity.
    pub fn new(adjacency: Array2<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(NeoError::DimensionMismatch(format!(
                "adjacency must be square, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = adjacency[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(NeoError::InvalidData(format!(
                        "adjacency entry ({i},{j}) = {v} is negative or non-finite"
                    )));
                }
                if (v - adjacency[(j, i)]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(NeoError::InvalidData(format!(
                        "adjacency is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let degrees = adjacency.sum_axis(ndarray::Axis(1));
        Ok(Self { adjacency, degrees })
    }

    /// Builds a graph on `n` nodes from undirected edges (0-based endpoints).
    /// Parallel edges accumulate weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut a = Array2::zeros((n, n));
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(NeoError::InvalidData(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(NeoError::InvalidData(format!(
                    "edge ({u},{v}) has non-positive weight {w}"
                )));
            }
            a[(u, v)] += w;
            if u != v {
                a[(v, u)] += w;
            }
        }
        Self::new(a)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }
}

/// Builds the normalized-cut [`KernelProblem`] from a graph.
///
/// Weights are the node degrees and `K = W^-1 A W^-1 + delta W^-1`. Isolated
/// nodes cannot carry a weight and are dropped with a warning; the returned
/// vector maps retained-node indices back to original node indices.
pub fn kernel_from_graph(
    graph: &Graph,
    delta: f64,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<(KernelProblem, Vec<usize>)> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(NeoError::InvalidParameter(format!(
            "diagonal shift delta must be >= 0, got {delta}"
        )));
    }
    let keep: Vec<usize> = (0..graph.n())
        .filter(|&i| graph.degrees()[i] > 0.0)
        .collect();
    if keep.is_empty() {
        return Err(NeoError::EmptyGraph(
            "every node has zero degree".into(),
        ));
    }
    if keep.len() < graph.n() {
        log::warn!(
            "dropping {} isolated node(s) with zero degree",
            graph.n() - keep.len()
        );
    }
    let m = keep.len();
    let w = Array1::from_iter(keep.iter().map(|&i| graph.degrees()[i]));
    let mut kernel = Array2::zeros((m, m));
    for a in 0..m {
        for b in 0..m {
            kernel[(a, b)] = graph.adjacency()[(keep[a], keep[b])] / (w[a] * w[b]);
        }
        kernel[(a, a)] += delta / w[a];
    }
    let problem = KernelProblem::new(kernel, w, k, alpha, beta)?;
    Ok((problem, keep))
}

fn validate_clusters(clusters: &[Vec<usize>], n: usize) -> Result<()> {
    for (c, members) in clusters.iter().enumerate() {
        if members.is_empty() {
            return Err(NeoError::InvalidData(format!(
                "ground-truth cluster {c} is empty"
            )));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= n) {
            return Err(NeoError::InvalidData(format!(
                "ground-truth cluster {c} references point {bad} but only {n} points exist"
            )));
        }
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> NeoError {
    NeoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> NeoError {
    NeoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a feature matrix from CSV or TSV (fields split on commas if any,
/// else on whitespace). `has_header` skips the first line.
pub fn load_features(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        if has_header && lineno == 0 {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let mut row = Vec::with_capacity(fields.len());
        for field in fields {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, lineno + 1, format!("expected a number, got {field:?}"))
            })?;
            row.push(v);
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected {width} fields, got {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let n = rows.len();
    let x = Array2::from_shape_fn((n, width), |(i, j)| rows[i][j]);
    Dataset::new(x)
}

/// Reads an undirected edge list: one `u v [weight]` triple per line,
/// 1-based node ids, each edge listed once. Blank lines and lines starting
/// with `#` or `%` are skipped.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut n = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected `u v [weight]`, got {} fields", fields.len()),
            ));
        }
        let u: usize = fields[0].parse().map_err(|_| {
            parse_err(path, lineno + 1, format!("bad node id {:?}", fields[0]))
        })?;
        let v: usize = fields[1].parse().map_err(|_| {
            parse_err(path, lineno + 1, format!("bad node id {:?}", fields[1]))
        })?;
        if u == 0 || v == 0 {
            return Err(parse_err(path, lineno + 1, "node ids are 1-based"));
        }
        let w: f64 = if fields.len() == 3 {
            fields[2].parse().map_err(|_| {
                parse_err(path, lineno + 1, format!("bad weight {:?}", fields[2]))
            })?
        } else {
            1.0
        };
        n = n.max(u).max(v);
        edges.push((u - 1, v - 1, w));
    }
    if edges.is_empty() {
        return Err(NeoError::EmptyGraph(format!(
            "{} contains no edges",
            path.display()
        )));
    }
    Graph::from_edges(n, &edges)
}

/// Reads clusters: one per line, space-separated 1-based point ids.
/// Returns 0-based index sets. `n` bounds the valid ids.
pub fn load_clusters(path: impl AsRef<Path>, n: usize) -> Result<Vec<Vec<usize>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut clusters = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut members = Vec::new();
        for field in line.split_whitespace() {
            let id: usize = field.parse().map_err(|_| {
                parse_err(path, lineno + 1, format!("bad point id {field:?}"))
            })?;
            if id == 0 || id > n {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("point id {id} outside 1..={n}"),
                ));
            }
            members.push(id - 1);
        }
        clusters.push(members);
    }
    if clusters.is_empty() {
        return Err(parse_err(path, 1, "no clusters"));
    }
    Ok(clusters)
}

/// Writes clusters in the same format [`load_clusters`] reads: one cluster
/// per line, space-separated 1-based ids. Empty clusters produce empty lines
/// so cluster indices stay aligned.
pub fn write_clusters(path: impl AsRef<Path>, clusters: &[Vec<usize>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for members in clusters {
        let mut first = true;
        for &i in members {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{}", i + 1);
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn linear_kernel_of_unit_rows_is_identity() {
        let data = Dataset::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let k = data.linear_kernel();
        assert_eq!(k, Array2::eye(2));
    }

    #[test]
    fn linear_kernel_matches_triple_loop() {
        let x = array![
            [0.3, -1.2, 0.7],
            [1.1, 0.4, -0.5],
            [-0.2, 0.9, 2.0],
            [0.0, 0.0, 1.0]
        ];
        let data = Dataset::new(x.clone()).unwrap();
        let k = data.linear_kernel();
        for i in 0..4 {
            for j in 0..4 {
                let mut dot = 0.0;
                for t in 0..3 {
                    dot += x[(i, t)] * x[(j, t)];
                }
                assert_abs_diff_eq!(k[(i, j)], dot, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_kernel_diagonal_is_one() {
        let data = Dataset::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let k = data.gaussian_kernel(0.7);
        for i in 0..3 {
            assert_eq!(k[(i, i)], 1.0);
        }
    }

    #[test]
    fn gaussian_kernel_matches_scalar_recomputation() {
        let x = array![[0.4, -0.3], [1.5, 2.2], [-0.7, 0.9]];
        let data = Dataset::new(x.clone()).unwrap();
        let h = 1.3;
        let k = data.gaussian_kernel(h);
        for i in 0..3 {
            for j in 0..3 {
                let dx = x[(i, 0)] - x[(j, 0)];
                let dy = x[(i, 1)] - x[(j, 1)];
                let expected = (-(dx * dx + dy * dy) / (2.0 * h * h)).exp();
                assert_abs_diff_eq!(k[(i, j)], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn graph_kernel_satisfies_diagonal_identity() {
        // random-ish 6-node graph, including a self-loop and weights
        let edges = [
            (0, 1, 1.0),
            (0, 2, 2.0),
            (1, 2, 1.0),
            (2, 3, 0.5),
            (3, 4, 1.0),
            (4, 5, 3.0),
            (5, 5, 1.0),
        ];
        let graph = Graph::from_edges(6, &edges).unwrap();
        let delta = 0.25;
        let (problem, keep) = kernel_from_graph(&graph, delta, 2, 0.0, 0.0).unwrap();
        assert_eq!(keep, vec![0, 1, 2, 3, 4, 5]);
        let k = problem.kernel();
        for a in 0..6 {
            for b in 0..6 {
                assert_abs_diff_eq!(k[(a, b)], k[(b, a)], epsilon = 1e-12);
            }
            // w_i K_ii = A_ii / w_i + delta
            let w = problem.weights()[a];
            let expected = graph.adjacency()[(a, a)] / w + delta;
            assert_abs_diff_eq!(w * k[(a, a)], expected, epsilon = 1e-12);
            assert_abs_diff_eq!(problem.d()[a], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn graph_kernel_drops_isolated_nodes() {
        // node 2 (0-based) is isolated
        let graph = Graph::from_edges(4, &[(0, 1, 1.0), (0, 3, 1.0)]).unwrap();
        let (problem, keep) = kernel_from_graph(&graph, 0.0, 1, 0.0, 0.0).unwrap();
        assert_eq!(keep, vec![0, 1, 3]);
        assert_eq!(problem.n(), 3);
        assert_eq!(problem.weights(), &array![2.0, 1.0, 1.0]);
    }

    #[test]
    fn graph_without_edges_is_an_error() {
        let graph = Graph::new(Array2::zeros((3, 3))).unwrap();
        let got = kernel_from_graph(&graph, 0.0, 1, 0.0, 0.0);
        assert!(matches!(got, Err(NeoError::EmptyGraph(_))));
    }

    #[test]
    fn karate_club_has_expected_volume() {
        let graph = load_graph(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/karate.txt"))
            .unwrap();
        assert_eq!(graph.n(), 34);
        assert_eq!(graph.adjacency().sum(), 156.0); // 2 x 78 edges
        assert_eq!(graph.degrees().sum(), 156.0);
        let (problem, keep) = kernel_from_graph(&graph, 0.0, 2, 0.0, 0.0).unwrap();
        assert_eq!(keep.len(), 34);
        assert_eq!(problem.weights().sum(), 156.0);
    }

    #[test]
    fn feature_loader_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("points.csv");
        std::fs::write(&csv, "1.0,2.0\n3.0,4.0\n").unwrap();
        let data = load_features(&csv, false).unwrap();
        assert_eq!(data.features(), &array![[1.0, 2.0], [3.0, 4.0]]);

        let tsv = dir.path().join("points.tsv");
        std::fs::write(&tsv, "x\ty\n1.0\t2.0\n3.0\t4.0\n").unwrap();
        let data = load_features(&tsv, true).unwrap();
        assert_eq!(data.features(), &array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn feature_loader_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("bad.csv");
        std::fs::write(&csv, "1.0,2.0\n3.0\n").unwrap();
        let got = load_features(&csv, false);
        assert!(matches!(got, Err(NeoError::Parse { line: 2, .. })));
    }

    #[test]
    fn graph_loader_parses_weights_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "# a comment\n1 2\n2 3 0.5\n\n").unwrap();
        let graph = load_graph(&path).unwrap();
        assert_eq!(graph.n(), 3);
        assert_eq!(graph.adjacency()[(0, 1)], 1.0);
        assert_eq!(graph.adjacency()[(1, 2)], 0.5);
        assert_eq!(graph.adjacency()[(2, 1)], 0.5);
    }

    #[test]
    fn graph_loader_rejects_zero_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "0 1\n").unwrap();
        assert!(matches!(
            load_graph(&path),
            Err(NeoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn cluster_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        let clusters = vec![vec![0, 2, 4], vec![1, 2]];
        write_clusters(&path, &clusters).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1 3 5\n2 3\n");
        let back = load_clusters(&path, 5).unwrap();
        assert_eq!(back, clusters);
    }

    #[test]
    fn cluster_loader_rejects_out_of_range_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        std::fs::write(&path, "1 2 9\n").unwrap();
        assert!(matches!(
            load_clusters(&path, 5),
            Err(NeoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn ground_truth_validation() {
        let data = Dataset::new(array![[0.0], [1.0]]).unwrap();
        assert!(data.clone().with_ground_truth(vec![vec![0], vec![1]]).is_ok());
        let data2 = Dataset::new(array![[0.0], [1.0]]).unwrap();
        assert!(data2.with_ground_truth(vec![vec![2]]).is_err());
    }
}
