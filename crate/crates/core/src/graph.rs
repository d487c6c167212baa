//! Dynamic graph samples and the structural transforms the encoders consume.
//!
//! A [`DynamicGraphSample`] is a sequence of snapshot graphs over one fixed
//! node set. Words that do not occur on a given day are isolated nodes in that
//! day's snapshot. Self-loops are never stored; [`normalize_adjacency`] adds
//! them when it forms `D^-1/2 (A + I) D^-1/2`.

use std::fmt;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Undirected snapshot adjacency with canonical `(u, v)`, `u < v`, sorted edges.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdjacency {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl SparseAdjacency {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: Vec::new(),
            weights: None,
        }
    }

    /// Strict constructor: rejects self-edges, out-of-range indices and duplicate pairs.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            canon.push(canonical_edge(num_nodes, u, v)?);
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Structure(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            num_nodes,
            edges: canon,
            weights: None,
        })
    }

    /// Weighted variant of [`SparseAdjacency::new`]. Weights must be finite and positive.
    pub fn with_weights(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v, w) in edges {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Structure(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            let (a, b) = canonical_edge(num_nodes, u, v)?;
            canon.push((a, b, w));
        }
        canon.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if let Some(w) = canon
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::Structure(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            num_nodes,
            edges: canon.iter().map(|&(a, b, _)| (a, b)).collect(),
            weights: Some(canon.iter().map(|e| e.2).collect()),
        })
    }

    /// Lenient constructor for raw pair streams: drops self-pairs and merges duplicates.
    pub fn from_pairs_dedup(
        num_nodes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in pairs {
            if u == v {
                if u >= num_nodes {
                    return Err(out_of_range(u, num_nodes));
                }
                continue;
            }
            canon.push(canonical_edge(num_nodes, u, v)?);
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            num_nodes,
            edges: canon,
            weights: None,
        })
    }

    /// Union of several snapshots over the same node set. Weights are dropped.
    pub fn union(graphs: &[SparseAdjacency]) -> Result<Self> {
        let n = graphs
            .first()
            .map(|g| g.num_nodes)
            .ok_or_else(|| Error::Structure("union of zero graphs".into()))?;
        if graphs.iter().any(|g| g.num_nodes != n) {
            return Err(Error::Structure("union over differing node counts".into()));
        }
        Self::from_pairs_dedup(n, graphs.iter().flat_map(|g| g.edges.iter().copied()))
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    #[inline]
    pub fn weight(&self, edge: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[edge])
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).is_ok()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.num_nodes];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let w = self.weight(e);
            deg[u] += w;
            deg[v] += w;
        }
        deg
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let w = self.weight(e);
            m.set(u, v, w);
            m.set(v, u, w);
        }
        m
    }

    /// Induced subgraph on `idx` (strictly increasing). Node `a` of the result is `idx[a]`.
    pub fn induced_subgraph(&self, idx: &[usize]) -> Result<Self> {
        check_selection(idx, self.num_nodes)?;
        let mut remap = vec![usize::MAX; self.num_nodes];
        for (new, &old) in idx.iter().enumerate() {
            remap[old] = new;
        }
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let (a, b) = (remap[u], remap[v]);
            if a != usize::MAX && b != usize::MAX {
                // idx is increasing, so a < b is preserved.
                edges.push((a, b));
                weights.push(self.weight(e));
            }
        }
        Ok(Self {
            num_nodes: idx.len(),
            edges,
            weights: self.weights.as_ref().map(|_| weights),
        })
    }

    /// Applies a node relabelling `old -> perm[old]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::Structure("permutation length mismatch".into()));
        }
        match &self.weights {
            None => Self::new(
                self.num_nodes,
                self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            ),
            Some(w) => Self::with_weights(
                self.num_nodes,
                self.edges
                    .iter()
                    .zip(w)
                    .map(|(&(u, v), &w)| (perm[u], perm[v], w)),
            ),
        }
    }
}

fn out_of_range(i: usize, n: usize) -> Error {
    Error::Structure(format!("node index {i} out of range for {n} nodes"))
}

fn canonical_edge(n: usize, u: usize, v: usize) -> Result<(usize, usize)> {
    if u >= n {
        return Err(out_of_range(u, n));
    }
    if v >= n {
        return Err(out_of_range(v, n));
    }
    if u == v {
        return Err(Error::Structure(format!("self-edge at node {u}")));
    }
    Ok(if u < v { (u, v) } else { (v, u) })
}

fn check_selection(idx: &[usize], n: usize) -> Result<()> {
    for w in idx.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Structure(format!(
                "selection must be strictly increasing (got {} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = idx.last() {
        if last >= n {
            return Err(out_of_range(last, n));
        }
    }
    Ok(())
}

/// Symmetric normalized adjacency with self-loops, stored in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// `D^-1/2 (A + I) D^-1/2` where `D` is the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &SparseAdjacency) -> NormalizedAdjacency {
    let n = a.num_nodes();
    let deg: Vec<f64> = a.degrees().into_iter().map(|d| d + 1.0).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0 / deg[i])]).collect();
    for (e, &(u, v)) in a.edges().iter().enumerate() {
        // One value placed at both (u,v) and (v,u) keeps the matrix exactly symmetric.
        let val = a.weight(e) / (deg[u] * deg[v]).sqrt();
        rows[u].push((v, val));
        rows[v].push((u, val));
    }
    NormalizedAdjacency::from_row_lists(n, rows)
}

impl NormalizedAdjacency {
    fn from_row_lists(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            num_nodes: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Identity on `n` nodes, the normalization of an edgeless graph.
    pub fn identity(n: usize) -> Self {
        Self::from_row_lists(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` entries of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `self · h`
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.num_nodes {
            return Err(Error::dim(
                "spmm",
                (self.num_nodes, self.num_nodes),
                h.shape(),
            ));
        }
        let d = h.cols();
        let mut out = Matrix::zeros(self.num_nodes, d);
        for i in 0..self.num_nodes {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let out_row = out.row_mut(i);
            for (&j, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out_row.iter_mut().zip(h.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`
    pub fn spmm_transpose(&self, g: &Matrix) -> Result<Matrix> {
        if g.rows() != self.num_nodes {
            return Err(Error::dim(
                "spmm_transpose",
                (self.num_nodes, self.num_nodes),
                g.shape(),
            ));
        }
        let d = g.cols();
        let mut out = Matrix::zeros(self.num_nodes, d);
        for i in 0..self.num_nodes {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let src = g.row(i);
            for (&j, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Entry-wise submatrix on `idx` (strictly increasing).
    pub fn induced_subgraph(&self, idx: &[usize]) -> Result<Self> {
        check_selection(idx, self.num_nodes)?;
        let mut remap = vec![usize::MAX; self.num_nodes];
        for (new, &old) in idx.iter().enumerate() {
            remap[old] = new;
        }
        let rows = idx
            .iter()
            .map(|&old| {
                self.row(old)
                    .filter(|&(c, _)| remap[c] != usize::MAX)
                    .map(|(c, v)| (remap[c], v))
                    .collect()
            })
            .collect();
        Ok(Self::from_row_lists(idx.len(), rows))
    }
}

/// One labelled sequence of `T` snapshots over a fixed node set.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicGraphSample {
    pub sample_id: String,
    pub num_nodes: usize,
    pub snapshots: Vec<SparseAdjacency>,
    /// Vocabulary index of each node; selects the node's row of the embedding table.
    pub node_vocab_ids: Vec<usize>,
    pub label: u8,
}

impl DynamicGraphSample {
    pub fn num_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    /// Restricts the input window.
    ///
    /// `lead_days = l` drops the final `l - 1` snapshots so the prediction target
    /// sits `l` days past the latest input; `historic_days = Some(k)` then keeps
    /// the last `k` of what remains.
    pub fn windowed(&self, historic_days: Option<usize>, lead_days: usize) -> Result<Self> {
        let t = self.snapshots.len();
        if lead_days == 0 || lead_days > t {
            return Err(Error::Config(format!(
                "lead_days {lead_days} outside 1..={t} for sample {}",
                self.sample_id
            )));
        }
        let end = t - (lead_days - 1);
        let start = match historic_days {
            None => 0,
            Some(k) if k == 0 || k > end => {
                return Err(Error::Config(format!(
                    "historic_days {k} outside 1..={end} for sample {}",
                    self.sample_id
                )))
            }
            Some(k) => end - k,
        };
        Ok(Self {
            snapshots: self.snapshots[start..end].to_vec(),
            ..self.clone()
        })
    }

    /// Relabels nodes `old -> perm[old]` in every snapshot and in the vocabulary map.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut ids = vec![0; self.num_nodes];
        for (old, &new) in perm.iter().enumerate() {
            ids[new] = self.node_vocab_ids[old];
        }
        Ok(Self {
            snapshots: self
                .snapshots
                .iter()
                .map(|s| s.permuted(perm))
                .collect::<Result<_>>()?,
            node_vocab_ids: ids,
            ..self.clone()
        })
    }
}

/// Per-sample semantic node features `H_sem` (`N × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticFeatures(pub Matrix);

impl SemanticFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSnapshots,
    SnapshotNodeCount {
        snapshot: usize,
        found: usize,
        expected: usize,
    },
    LabelNotBinary(u8),
    VocabLength {
        found: usize,
        expected: usize,
    },
    FeatureRows {
        found: usize,
        expected: usize,
    },
    NonFiniteFeature,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSnapshots => write!(f, "sample has no snapshots"),
            Violation::SnapshotNodeCount {
                snapshot,
                found,
                expected,
            } => write!(
                f,
                "snapshot node-count mismatch (snapshot {snapshot}: {found} != {expected})"
            ),
            Violation::LabelNotBinary(l) => write!(f, "label not binary ({l})"),
            Violation::VocabLength { found, expected } => {
                write!(f, "node_vocab_ids length {found} != num_nodes {expected}")
            }
            Violation::FeatureRows { found, expected } => {
                write!(f, "feature row count {found} != num_nodes {expected}")
            }
            Violation::NonFiniteFeature => write!(f, "non-finite feature entry"),
        }
    }
}

/// Checks every sample invariant plus feature/node agreement. Never mutates.
pub fn validate_sample(s: &DynamicGraphSample, features: &SemanticFeatures) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.snapshots.is_empty() {
        out.push(Violation::NoSnapshots);
    }
    for (t, snap) in s.snapshots.iter().enumerate() {
        if snap.num_nodes() != s.num_nodes {
            out.push(Violation::SnapshotNodeCount {
                snapshot: t,
                found: snap.num_nodes(),
                expected: s.num_nodes,
            });
        }
    }
    if s.label > 1 {
        out.push(Violation::LabelNotBinary(s.label));
    }
    if s.node_vocab_ids.len() != s.num_nodes {
        out.push(Violation::VocabLength {
            found: s.node_vocab_ids.len(),
            expected: s.num_nodes,
        });
    }
    if features.0.rows() != s.num_nodes {
        out.push(Violation::FeatureRows {
            found: features.0.rows(),
            expected: s.num_nodes,
        });
    }
    if !features.0.is_finite() {
        out.push(Violation::NonFiniteFeature);
    }
    out
}
