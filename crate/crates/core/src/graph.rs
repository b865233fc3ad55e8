//! Trajectory graph, per-node signals, Laplacian spectrum and the graph
//! Fourier transform.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::density::{DensityGrid, SegmentLabels};
use crate::error::{Error, Result};
use crate::features::{channel, FeatureSeries, RawTrajectory};
use crate::linalg::Matrix;

/// Resolves grid cells to node ids, snapping unassigned cells to the nearest
/// labeled cell (Euclidean over cell centres, ties to the lowest (row, col)).
pub struct NodeLookup<'a> {
    labels: &'a SegmentLabels,
    labeled: Vec<(usize, usize, usize)>,
}

impl<'a> NodeLookup<'a> {
    pub fn new(labels: &'a SegmentLabels) -> Self {
        let cols = labels.labels.cols;
        let labeled = labels
            .labels
            .data
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|id| (i / cols, i % cols, id)))
            .collect();
        NodeLookup { labels, labeled }
    }

    pub fn node_of_cell(&self, row: usize, col: usize) -> Option<usize> {
        if let Some(id) = *self.labels.labels.get(row, col) {
            return Some(id);
        }
        let mut best: Option<(usize, usize)> = None;
        for &(r, c, id) in &self.labeled {
            let d2 = r.abs_diff(row).pow(2) + c.abs_diff(col).pow(2);
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Node id of every sample; errors on samples outside the grid.
    pub fn map(&self, raw: &RawTrajectory, grid: &DensityGrid) -> Result<Vec<usize>> {
        raw.samples
            .iter()
            .map(|s| {
                let (r, c) = grid.cell_of(s.x, s.y).ok_or(Error::OutOfBounds { x: s.x, y: s.y })?;
                self.node_of_cell(r, c).ok_or(Error::AllZero)
            })
            .collect()
    }

    /// Like [`NodeLookup::map`] but clamps outside samples onto the border cells.
    pub fn map_clamped(&self, raw: &RawTrajectory, grid: &DensityGrid) -> Result<Vec<usize>> {
        raw.samples
            .iter()
            .map(|s| {
                let (r, c) = grid.clamped_cell_of(s.x, s.y);
                self.node_of_cell(r, c).ok_or(Error::AllZero)
            })
            .collect()
    }
}

/// Sample → containing cell → node id.
pub fn map_trajectory_to_nodes(raw: &RawTrajectory, labels: &SegmentLabels, grid: &DensityGrid) -> Result<Vec<usize>> {
    NodeLookup::new(labels).map(raw, grid)
}

/// Mean cell-centre position of every segment.
pub fn segment_centroids(labels: &SegmentLabels, grid: &DensityGrid) -> Vec<(f64, f64)> {
    let k = labels.segment_count();
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    let cols = labels.labels.cols;
    for (i, l) in labels.labels.data.iter().enumerate() {
        if let Some(id) = l {
            let (x, y) = grid.cell_center(i / cols, i % cols);
            let e = &mut sums[*id];
            e.0 += x;
            e.1 += y;
            e.2 += 1;
        }
    }
    sums.into_iter()
        .map(|(x, y, n)| if n == 0 { (0.0, 0.0) } else { (x / n as f64, y / n as f64) })
        .collect()
}

/// Undirected, unweighted transition graph between map segments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    centroids: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    node_count: usize,
    edges: Vec<[usize; 2]>,
    centroids: Vec<[f64; 2]>,
}

impl TrajectoryGraph {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>, centroids: Vec<(f64, f64)>) -> Result<Self> {
        if centroids.len() != node_count {
            return Err(Error::DimensionMismatch {
                expected: node_count,
                actual: centroids.len(),
            });
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for id in [i, j] {
                if id >= node_count {
                    return Err(Error::IdOutOfRange { id, node_count });
                }
            }
            if i != j {
                set.insert((i.min(j), i.max(j)));
            }
        }
        Ok(TrajectoryGraph {
            node_count,
            edges: set,
            centroids,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn centroids(&self) -> &[(f64, f64)] {
        &self.centroids
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.node_count, self.node_count);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// True when every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut neighbors = vec![Vec::new(); self.node_count];
        for &(i, j) in &self.edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDocument {
            node_count: self.node_count,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            centroids: self.centroids.iter().map(|&(x, y)| [x, y]).collect(),
        };
        serde_json::to_string(&doc).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        TrajectoryGraph::new(
            doc.node_count,
            doc.edges.into_iter().map(|[i, j]| (i, j)),
            doc.centroids.into_iter().map(|[x, y]| (x, y)).collect(),
        )
    }
}

/// One undirected edge per consecutive transition `i → j`, `i ≠ j`.
pub fn build_graph(node_sequences: &[Vec<usize>], node_count: usize, centroids: Vec<(f64, f64)>) -> Result<TrajectoryGraph> {
    let mut edges = Vec::new();
    for seq in node_sequences {
        if let Some(&id) = seq.iter().find(|&&id| id >= node_count) {
            return Err(Error::IdOutOfRange { id, node_count });
        }
        edges.extend(seq.windows(2).map(|w| (w[0], w[1])));
    }
    TrajectoryGraph::new(node_count, edges, centroids)
}

pub const NODE_FEATURES: usize = 8;

/// Per-node aggregate of one trajectory, `|N| × 8` row-major:
/// `[mean s, mean ∇s, mean θ, mean ∇θ, mean entropy, mean variance, returned, visits]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSignal {
    pub node_count: usize,
    pub values: Vec<f64>,
}

impl NodeSignal {
    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * NODE_FEATURES..(node + 1) * NODE_FEATURES]
    }
}

/// Number of samples spent on each node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitSignal {
    pub counts: Vec<u32>,
}

impl VisitSignal {
    pub fn from_sequence(node_seq: &[usize], node_count: usize) -> Result<Self> {
        let mut counts = vec![0u32; node_count];
        for &id in node_seq {
            *counts.get_mut(id).ok_or(Error::IdOutOfRange { id, node_count })? += 1;
        }
        Ok(VisitSignal { counts })
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Averages the trajectory features over the samples assigned to each node.
///
/// θ is averaged on the circle. A node is flagged as returned to when it
/// appears in two or more maximal runs of the sequence.
pub fn aggregate_node_signal(features: &FeatureSeries, node_seq: &[usize], node_count: usize) -> Result<NodeSignal> {
    if node_seq.len() != features.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            actual: node_seq.len(),
        });
    }
    if let Some(&id) = node_seq.iter().find(|&&id| id >= node_count) {
        return Err(Error::IdOutOfRange { id, node_count });
    }
    let linear = [channel::SPEED, channel::ACCEL, channel::DTHETA, channel::ENTROPY, channel::VARIANCE];
    let mut sums = vec![[0.0f64; 5]; node_count];
    let mut sin_cos = vec![(0.0f64, 0.0f64); node_count];
    let mut visits = vec![0usize; node_count];
    let mut runs = vec![0usize; node_count];
    let theta = features.channel(channel::THETA);

    for (t, &id) in node_seq.iter().enumerate() {
        for (slot, &ch) in sums[id].iter_mut().zip(&linear) {
            *slot += features.channel(ch)[t];
        }
        sin_cos[id].0 += theta[t].sin();
        sin_cos[id].1 += theta[t].cos();
        visits[id] += 1;
        if t == 0 || node_seq[t - 1] != id {
            runs[id] += 1;
        }
    }

    let mut values = vec![0.0; node_count * NODE_FEATURES];
    for id in 0..node_count {
        if visits[id] == 0 {
            continue;
        }
        let n = visits[id] as f64;
        let row = &mut values[id * NODE_FEATURES..(id + 1) * NODE_FEATURES];
        row[0] = sums[id][0] / n;
        row[1] = sums[id][1] / n;
        row[2] = sin_cos[id].0.atan2(sin_cos[id].1);
        row[3] = sums[id][2] / n;
        row[4] = sums[id][3] / n;
        row[5] = sums[id][4] / n;
        row[6] = if runs[id] >= 2 { 1.0 } else { 0.0 };
        row[7] = n;
    }
    Ok(NodeSignal { node_count, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `I − D^{−1/2} A D^{−1/2}`, spectrum in [0, 2].
    #[default]
    Normalized,
    /// `D − A`.
    Combinatorial,
}

/// Graph Laplacian. Isolated nodes get an all-zero row and column.
pub fn laplacian(graph: &TrajectoryGraph, kind: LaplacianKind) -> Matrix {
    let n = graph.node_count();
    let deg = graph.degrees();
    let mut l = Matrix::zeros(n, n);
    match kind {
        LaplacianKind::Normalized => {
            for i in 0..n {
                if deg[i] > 0 {
                    l[(i, i)] = 1.0;
                }
            }
            for (i, j) in graph.edges() {
                let w = -1.0 / ((deg[i] * deg[j]) as f64).sqrt();
                l[(i, j)] = w;
                l[(j, i)] = w;
            }
        }
        LaplacianKind::Combinatorial => {
            for i in 0..n {
                l[(i, i)] = deg[i] as f64;
            }
            for (i, j) in graph.edges() {
                l[(i, j)] = -1.0;
                l[(j, i)] = -1.0;
            }
        }
    }
    l
}

/// Eigenvalues ascending with matching orthonormal eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Stops once the off-diagonal Frobenius norm drops below
/// `1e-12 · max(1, ‖L‖_F)`. Every eigenvector is signed so that its
/// largest-magnitude component is positive.
pub fn eigendecompose(l: &Matrix) -> Result<Spectrum> {
    let asym = l.asymmetry();
    if !(asym <= 1e-10) {
        return Err(Error::NotSymmetric(asym));
    }
    let n = l.rows();
    let mut a = l.clone();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = Matrix::identity(n);
    let tol = 1e-12 * l.frobenius().max(1.0);

    let off_norm = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) >= tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut lead = 0;
        for k in 0..n {
            if v[(k, src)].abs() > v[(lead, src)].abs() {
                lead = k;
            }
        }
        let sign = if v[(lead, src)] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[(k, dst)] = sign * v[(k, src)];
        }
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Binary sidecar: `"CSNNSPEC"`, version u32, |N| u32, then λ and U
    /// (column-major) as little-endian f64.
    pub fn encode(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(16 + 8 * (n + n * n));
        out.extend_from_slice(SPECTRUM_MAGIC);
        out.extend_from_slice(&SPECTRUM_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for &l in &self.eigenvalues {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for j in 0..n {
            for i in 0..n {
                out.extend_from_slice(&self.eigenvectors[(i, j)].to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Spectrum> {
        let header = 8 + 4 + 4;
        if bytes.len() < header || &bytes[..8] != SPECTRUM_MAGIC {
            return Err(Error::Parse("not a spectrum sidecar".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != SPECTRUM_VERSION {
            return Err(Error::Parse(format!("unsupported spectrum version {version}")));
        }
        let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(n)
            .and_then(|nn| nn.checked_add(n))
            .and_then(|c| c.checked_mul(8))
            .and_then(|b| b.checked_add(header))
            .ok_or_else(|| Error::Parse("spectrum size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "spectrum sidecar has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut values = bytes[header..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let eigenvalues: Vec<f64> = values.by_ref().take(n).collect();
        let mut eigenvectors = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                eigenvectors[(i, j)] = values.next().unwrap();
            }
        }
        if eigenvalues.iter().chain(eigenvectors.data()).any(|v| !v.is_finite()) {
            return Err(Error::Parse("non-finite value in spectrum".into()));
        }
        Ok(Spectrum { eigenvalues, eigenvectors })
    }
}

pub const SPECTRUM_MAGIC: &[u8; 8] = b"CSNNSPEC";
pub const SPECTRUM_VERSION: u32 = 1;

/// Graph Fourier transform `ŝ = Uᵀ s`.
pub fn gft(spectrum: &Spectrum, s: &[f64]) -> Result<Vec<f64>> {
    let n = spectrum.len();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len(),
        });
    }
    let u = &spectrum.eigenvectors;
    let mut out = vec![0.0; n];
    for (i, &si) in s.iter().enumerate() {
        if si == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += u[(i, k)] * si;
        }
    }
    Ok(out)
}

/// Inverse transform `s = U ŝ`.
pub fn igft(spectrum: &Spectrum, s_hat: &[f64]) -> Result<Vec<f64>> {
    let n = spectrum.len();
    if s_hat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s_hat.len(),
        });
    }
    let u = &spectrum.eigenvectors;
    Ok((0..n).map(|i| (0..n).map(|k| u[(i, k)] * s_hat[k]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Bounds, Raster};
    use crate::features::{compute_feature_series, FeatureConfig, Sample};

    fn k(n: usize) -> TrajectoryGraph {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        TrajectoryGraph::new(n, edges, vec![(0.0, 0.0); n]).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).data().iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn graph_edges_from_transitions() {
        let g = build_graph(&[vec![0, 0, 1, 2]], 3, vec![(0.0, 0.0); 3]).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        let g = build_graph(&[vec![0, 1], vec![1, 0]], 2, vec![(0.0, 0.0); 2]).unwrap();
        assert_eq!(g.edge_count(), 1);
        let g = build_graph(&[vec![0, 0], vec![1, 1, 1]], 2, vec![(0.0, 0.0); 2]).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(
            build_graph(&[vec![0, 5]], 2, vec![(0.0, 0.0); 2]),
            Err(Error::IdOutOfRange { id: 5, node_count: 2 })
        );
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&k(2), LaplacianKind::Normalized);
        assert_eq!(l, Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap());

        let empty = TrajectoryGraph::new(3, [], vec![(0.0, 0.0); 3]).unwrap();
        assert_eq!(laplacian(&empty, LaplacianKind::Normalized), Matrix::zeros(3, 3));

        let l = laplacian(&k(3), LaplacianKind::Normalized);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert!((l[(i, j)] - want).abs() < 1e-15);
            }
        }
        let c = laplacian(&k(3), LaplacianKind::Combinatorial);
        assert_eq!(c[(0, 0)], 2.0);
        assert_eq!(c[(0, 1)], -1.0);
    }

    #[test]
    fn identity_spectrum() {
        let s = eigendecompose(&Matrix::identity(4)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0; 4]);
        assert_eq!(s.eigenvectors, Matrix::identity(4));
    }

    #[test]
    fn k2_spectrum() {
        let s = eigendecompose(&laplacian(&k(2), LaplacianKind::Normalized)).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-12);
        assert!((s.eigenvalues[1] - 2.0).abs() < 1e-12);
        // sign fixing: largest component positive (first on ties)
        assert!(s.eigenvectors[(0, 1)] > 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigendecompose(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn gft_of_eigenvector_is_basis_vector() {
        let s = eigendecompose(&laplacian(&k(3), LaplacianKind::Normalized)).unwrap();
        for kk in 0..3 {
            let hat = gft(&s, &s.eigenvectors.column(kk)).unwrap();
            for (i, v) in hat.iter().enumerate() {
                let want = if i == kk { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
            let mut e = vec![0.0; 3];
            e[kk] = 1.0;
            let back = igft(&s, &e).unwrap();
            assert_eq!(back, s.eigenvectors.column(kk));
        }
        assert_eq!(gft(&s, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(igft(&s, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(gft(&s, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn parseval_on_k3() {
        let s = eigendecompose(&laplacian(&k(3), LaplacianKind::Normalized)).unwrap();
        let x = [0.3, -1.7, 2.2];
        let hat = gft(&s, &x).unwrap();
        let n1: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2: f64 = hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n1 - n2).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_of_symmetric_matrix() {
        let m = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.5],
            vec![-2.0, 0.0, -1.0, 2.0],
            vec![0.5, 1.5, 2.0, 0.0],
        ])
        .unwrap();
        let s = eigendecompose(&m).unwrap();
        let u = &s.eigenvectors;
        let mut d = Matrix::zeros(4, 4);
        for i in 0..4 {
            d[(i, i)] = s.eigenvalues[i];
        }
        let rebuilt = u.matmul(&d).unwrap().matmul(&u.transpose()).unwrap();
        assert!(close(&rebuilt, &m, 1e-12));
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sidecar_round_trip_and_rejects() {
        let s = eigendecompose(&laplacian(&k(3), LaplacianKind::Normalized)).unwrap();
        let bytes = s.encode();
        assert_eq!(&bytes[..8], b"CSNNSPEC");
        assert_eq!(Spectrum::decode(&bytes).unwrap(), s);
        assert!(Spectrum::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Spectrum::decode(&bad).is_err());
    }

    #[test]
    fn graph_json_round_trip() {
        let g = build_graph(&[vec![0, 1, 2, 0]], 3, vec![(1.0, 2.0), (3.0, 4.0), (5.5, 6.0)]).unwrap();
        assert_eq!(TrajectoryGraph::from_json(&g.to_json()).unwrap(), g);
        assert!(g.is_connected());
        assert!(TrajectoryGraph::from_json(r#"{"node_count":1,"edges":[[0,3]],"centroids":[[0,0]]}"#).is_err());
    }

    fn toy_grid() -> (DensityGrid, SegmentLabels) {
        // 3x4 grid: node 0 on columns 0-1, node 1 on column 3 and cell (0, 2);
        // the rest of column 2 is unassigned
        let grid = DensityGrid {
            bounds: Bounds {
                x_min: 0.0,
                x_max: 4.0,
                y_min: 0.0,
                y_max: 3.0,
            },
            cell_size: 1.0,
            counts: Raster::filled(3, 4, 1),
        };
        let mut labels = Raster::filled(3, 4, None);
        for r in 0..3 {
            *labels.get_mut(r, 0) = Some(0);
            *labels.get_mut(r, 1) = Some(0);
            *labels.get_mut(r, 3) = Some(1);
        }
        *labels.get_mut(0, 2) = Some(1);
        (
            grid,
            SegmentLabels {
                labels,
                seeds: vec![(1, 0), (1, 3)],
            },
        )
    }

    #[test]
    fn mapping_and_snapping() {
        let (grid, labels) = toy_grid();
        let inside = RawTrajectory::new("a", vec![Sample::new(0.0, 0.5, 0.5), Sample::new(1.0, 1.5, 2.5)]);
        assert_eq!(map_trajectory_to_nodes(&inside, &labels, &grid).unwrap(), vec![0, 0]);

        let crossing = RawTrajectory::new(
            "b",
            vec![Sample::new(0.0, 0.5, 1.5), Sample::new(1.0, 1.5, 1.5), Sample::new(2.0, 3.5, 1.5)],
        );
        assert_eq!(map_trajectory_to_nodes(&crossing, &labels, &grid).unwrap(), vec![0, 0, 1]);

        // cell (1, 2) is unassigned: neighbours (1,1)->0, (1,3)->1 and (0,2)->1
        // are all at distance 1; (0,2) comes first in row-major order
        let lookup = NodeLookup::new(&labels);
        assert_eq!(lookup.node_of_cell(1, 2), Some(1));
        // cell (2, 2): (2,1)->0 and (2,3)->1 tie at distance 1, (2,1) comes first
        assert_eq!(lookup.node_of_cell(2, 2), Some(0));

        let outside = RawTrajectory::new("c", vec![Sample::new(0.0, -3.0, 0.5)]);
        assert!(matches!(
            map_trajectory_to_nodes(&outside, &labels, &grid),
            Err(Error::OutOfBounds { .. })
        ));
        assert_eq!(lookup.map_clamped(&outside, &grid).unwrap(), vec![0]);
        let c = segment_centroids(&labels, &grid);
        assert_eq!(c[0], (1.0, 1.5));
    }

    fn features_for(n: usize) -> FeatureSeries {
        let raw = RawTrajectory::new("f", (0..n).map(|i| Sample::new(i as f64 * 0.5, i as f64, 0.0)).collect());
        compute_feature_series(&raw, &FeatureConfig::default()).unwrap()
    }

    #[test]
    fn node_signal_runs_and_visits() {
        let f = features_for(3);
        let s = aggregate_node_signal(&f, &[0, 1, 0], 3).unwrap();
        assert_eq!(s.row(0)[6], 1.0);
        assert_eq!(s.row(0)[7], 2.0);
        assert_eq!(s.row(1)[6], 0.0);
        assert_eq!(s.row(2), &[0.0; 8]);
        // constant speed 2 units/s
        assert!((s.row(0)[0] - 2.0).abs() < 1e-12);
        assert!((s.row(1)[0] - 2.0).abs() < 1e-12);

        let single = aggregate_node_signal(&f, &[1, 1, 1], 2).unwrap();
        assert_eq!(single.row(1)[6], 0.0);
        assert_eq!(single.row(1)[7], 3.0);

        assert!(matches!(aggregate_node_signal(&f, &[0, 1], 2), Err(Error::LengthMismatch { .. })));
        let v = VisitSignal::from_sequence(&[0, 1, 0], 3).unwrap();
        assert_eq!(v.counts, vec![2, 1, 0]);
    }
}
