//! Value types shared by every stage of the pipeline: adjacency snapshots,
//! graph sequences, community memberships, cluster (co-membership) matrices,
//! block probability matrices, dynamics parameters and majority masks.
//!
//! Community labels are 1-based wherever they cross the public API
//! ([`Membership::new`], [`Membership::label`]). Node indices and block-matrix
//! indices are 0-based, like any other matrix index.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

/// Tolerance used when checking symmetry and feasibility of real-valued parameters.
pub const PARAM_TOL: f64 = 1e-12;

/// One undirected, unweighted snapshot stored as a dense `n x n` 0/1 matrix.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    data: Vec<u8>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                a.set_edge(i, j, true);
            }
        }
        a
    }

    /// Builds a snapshot from an undirected edge list. Duplicate edges are
    /// idempotent; self-loops and out-of-range ids are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return invalid_arg(format!("edge ({u},{v}) out of range for n={n}"));
            }
            if u == v {
                return invalid_arg(format!("self-loop at node {u}"));
            }
            a.set_edge(u, v, true);
        }
        Ok(a)
    }

    /// Builds a snapshot from raw rows without enforcing symmetry or a zero
    /// diagonal, so that [`validate_sequence`] can report on it. Entries must
    /// be 0 or 1 and the matrix must be square.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "adjacency row length",
                    expected: n,
                    found: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|&&x| x > 1) {
                return invalid_arg(format!("non-binary entry {bad} in row {i}"));
            }
            data.extend_from_slice(row);
        }
        Ok(Adjacency { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 1
    }

    /// Sets or clears the undirected edge `{i, j}`. Panics if `i == j`.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i != j, "self-loops are not representable");
        let v = present as u8;
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|&x| x as usize).sum()
    }

    /// Number of undirected edges (upper triangle).
    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Iterates over `(i, j)` with `i < j` and an edge present.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).filter_map(move |j| self.has_edge(i, j).then_some((i, j)))
        })
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Adjacency {
        let m = nodes.len();
        let mut data = vec![0u8; m * m];
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                data[a * m + b] = self.get(i, j);
            }
        }
        Adjacency { n: m, data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    fn diagnostics(&self, t: usize, expected_n: usize, out: &mut Vec<Diagnostic>) {
        if self.n != expected_n {
            out.push(Diagnostic::ShapeMismatch {
                t,
                expected: expected_n,
                found: self.n,
            });
            return;
        }
        for i in 0..self.n {
            if self.get(i, i) != 0 {
                out.push(Diagnostic::NonzeroDiagonal { t, i });
            }
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    out.push(Diagnostic::Asymmetric { t, i, j });
                }
            }
        }
    }
}

impl fmt::Debug for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Adjacency")
            .field("n", &self.n)
            .field("edges", &self.edge_count())
            .finish()
    }
}

/// A problem found by [`validate_sequence`]. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    Empty,
    ShapeMismatch { t: usize, expected: usize, found: usize },
    NonzeroDiagonal { t: usize, i: usize },
    Asymmetric { t: usize, i: usize, j: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Empty => write!(f, "sequence has no snapshots"),
            Diagnostic::ShapeMismatch { t, expected, found } => {
                write!(f, "snapshot {t} has {found} nodes, expected {expected}")
            }
            Diagnostic::NonzeroDiagonal { t, i } => {
                write!(f, "nonzero diagonal at (t={t},i={i})")
            }
            Diagnostic::Asymmetric { t, i, j } => write!(f, "asymmetric at (t={t},{i},{j})"),
        }
    }
}

/// Checks every snapshot for shape, diagonal and symmetry problems and
/// reports all of them.
pub fn validate_sequence(snapshots: &[Adjacency]) -> std::result::Result<(), Vec<Diagnostic>> {
    let Some(first) = snapshots.first() else {
        return Err(vec![Diagnostic::Empty]);
    };
    let mut out = Vec::new();
    for (t, a) in snapshots.iter().enumerate() {
        a.diagnostics(t, first.n, &mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// An ordered list of `T >= 1` valid snapshots over a fixed node set.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSequence {
    n: usize,
    snapshots: Vec<Adjacency>,
}

impl GraphSequence {
    pub fn new(snapshots: Vec<Adjacency>) -> Result<Self> {
        validate_sequence(&snapshots).map_err(Error::InvalidSequence)?;
        Ok(GraphSequence {
            n: snapshots[0].n(),
            snapshots,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of snapshots `T`.
    #[inline]
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshot(&self, t: usize) -> &Adjacency {
        &self.snapshots[t]
    }

    pub fn snapshots(&self) -> &[Adjacency] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<Adjacency> {
        self.snapshots
    }

    /// Snapshots `range.start..range.end` as a new sequence.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<GraphSequence> {
        if range.start >= range.end || range.end > self.len() {
            return invalid_arg(format!(
                "window {range:?} invalid for sequence of length {}",
                self.len()
            ));
        }
        Ok(GraphSequence {
            n: self.n,
            snapshots: self.snapshots[range].to_vec(),
        })
    }

    pub fn induced(&self, nodes: &[usize]) -> Result<GraphSequence> {
        if nodes.is_empty() {
            return invalid_arg("induced subgraph over an empty node set");
        }
        if let Some(&bad) = nodes.iter().find(|&&i| i >= self.n) {
            return invalid_arg(format!("node {bad} out of range for n={}", self.n));
        }
        Ok(GraphSequence {
            n: nodes.len(),
            snapshots: self.snapshots.iter().map(|a| a.induced(nodes)).collect(),
        })
    }

    /// Entrywise mean of all snapshots.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for a in &self.snapshots {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += a.get(i, j) as f64;
                }
            }
        }
        m / self.len() as f64
    }
}

impl fmt::Debug for GraphSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphSequence")
            .field("n", &self.n)
            .field("T", &self.len())
            .finish()
    }
}

/// Assignment of `n` nodes to `k >= 2` communities.
///
/// Stored 0-based; [`Membership::new`] and [`Membership::label`] speak 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Membership {
    k: usize,
    labels: Vec<usize>,
}

impl Membership {
    /// `labels` are 1-based, each in `1..=k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > k) {
            return Err(Error::InvalidMembership(format!(
                "label {bad} outside 1..={k}"
            )));
        }
        Self::from_indices(labels.into_iter().map(|l| l - 1).collect(), k)
    }

    /// `indices` are 0-based, each in `0..k`.
    pub fn from_indices(indices: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidMembership(format!("k={k}, need k >= 2")));
        }
        if let Some(&bad) = indices.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidMembership(format!(
                "index {bad} outside 0..{k}"
            )));
        }
        Ok(Membership { k, labels: indices })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// 1-based label of node `i`.
    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i] + 1
    }

    /// 0-based community index of node `i`.
    #[inline]
    pub fn index(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn indices(&self) -> &[usize] {
        &self.labels
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Node lists per 0-based community index.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l].push(i);
        }
        blocks
    }

    pub fn nonempty_count(&self) -> usize {
        self.block_sizes().iter().filter(|&&s| s > 0).count()
    }

    /// Relabels communities in order of first occurrence.
    pub fn canonical(&self) -> Membership {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Membership { k: self.k, labels }
    }

    /// Applies `perm` (0-based, `perm[old] = new`) to every label.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Membership> {
        check_permutation(perm, self.k)?;
        Ok(Membership {
            k: self.k,
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
        })
    }

    /// Membership of the listed nodes, in the given order.
    pub fn restrict(&self, nodes: &[usize]) -> Membership {
        Membership {
            k: self.k,
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    if perm.len() != k {
        return Err(Error::DimensionMismatch {
            what: "permutation length",
            expected: k,
            found: perm.len(),
        });
    }
    let mut seen = vec![false; k];
    for &p in perm {
        if p >= k || seen[p] {
            return invalid_arg(format!("{perm:?} is not a permutation of 0..{k}"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Binary co-membership matrix: symmetric, reflexive and transitive.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMatrix {
    n: usize,
    data: Vec<u8>,
}

impl ClusterMatrix {
    pub fn from_membership(g: &Membership) -> Self {
        let n = g.n();
        let mut data = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = (g.index(i) == g.index(j)) as u8;
            }
        }
        ClusterMatrix { n, data }
    }

    /// Validates a raw row-major matrix against all cluster-matrix invariants.
    pub fn from_raw(n: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "cluster matrix entries",
                expected: n * n,
                found: data.len(),
            });
        }
        let y = ClusterMatrix { n, data };
        y.block_indices()?;
        Ok(y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.n + j]
    }

    /// Decomposes into blocks numbered by smallest member; rejects anything
    /// that is not an equivalence relation.
    fn block_indices(&self) -> Result<(Vec<usize>, usize)> {
        let n = self.n;
        let mut block = vec![usize::MAX; n];
        let mut count = 0;
        for i in 0..n {
            if self.get(i, i) != 1 {
                return Err(Error::InvalidClusterMatrix(format!("Y[{i},{i}] != 1")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if v > 1 {
                    return Err(Error::InvalidClusterMatrix(format!(
                        "non-binary entry at ({i},{j})"
                    )));
                }
                if v != self.get(j, i) {
                    return Err(Error::InvalidClusterMatrix(format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
            if block[i] != usize::MAX {
                continue;
            }
            let rep = self.row(i);
            for j in i..n {
                if rep[j] == 1 {
                    if block[j] != usize::MAX || self.row(j) != rep {
                        return Err(Error::InvalidClusterMatrix(format!(
                            "not transitive: rows {i} and {j} share a block but differ"
                        )));
                    }
                    block[j] = count;
                }
            }
            count += 1;
        }
        Ok((block, count))
    }

    fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Recovers a membership with canonical (first-occurrence) labels.
    pub fn to_membership(&self, k: usize) -> Result<Membership> {
        let (block, count) = self.block_indices()?;
        if count > k {
            return Err(Error::InvalidClusterMatrix(format!(
                "{count} blocks exceed k={k}"
            )));
        }
        Membership::from_indices(block, k)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }
}

impl fmt::Debug for ClusterMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClusterMatrix").field("n", &self.n).finish()
    }
}

/// `Y_ij = 1` iff `g_i = g_j`.
pub fn cluster_matrix(g: &Membership) -> ClusterMatrix {
    ClusterMatrix::from_membership(g)
}

pub fn membership_from_cluster_matrix(y: &ClusterMatrix, k: usize) -> Result<Membership> {
    y.to_membership(k)
}

/// Symmetric `k x k` matrix of probabilities.
///
/// Entries are in `[0, 1]`; `NaN` marks an entry that could not be estimated
/// (for example the diagonal of a singleton community).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix {
    k: usize,
    data: Vec<f64>,
}

impl BlockMatrix {
    /// Row-major entries.
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidBlockMatrix("k must be positive".into()));
        }
        if data.len() != k * k {
            return Err(Error::DimensionMismatch {
                what: "block matrix entries",
                expected: k * k,
                found: data.len(),
            });
        }
        for r in 0..k {
            for s in 0..k {
                let v = data[r * k + s];
                if !v.is_nan() && !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidBlockMatrix(format!(
                        "entry ({r},{s}) = {v} outside [0,1]"
                    )));
                }
                let w = data[s * k + r];
                let sym = (v.is_nan() && w.is_nan()) || (v - w).abs() <= PARAM_TOL;
                if !sym {
                    return Err(Error::InvalidBlockMatrix(format!(
                        "asymmetric at ({r},{s}): {v} vs {w}"
                    )));
                }
            }
        }
        Ok(BlockMatrix { k, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        Self::new(k, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Evaluates `f(r, s)` on the upper triangle and mirrors it.
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; k * k];
        for r in 0..k {
            for s in r..k {
                let v = f(r, s);
                data[r * k + s] = v;
                data[s * k + r] = v;
            }
        }
        Self::new(k, data)
    }

    pub fn constant(k: usize, value: f64) -> Result<Self> {
        Self::new(k, vec![value; k * k])
    }

    /// `diag` on the diagonal and `off` everywhere else.
    pub fn planted(k: usize, diag: f64, off: f64) -> Result<Self> {
        Self::from_fn(k, |r, s| if r == s { diag } else { off })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.data[r * self.k + s]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(self.k, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &BlockMatrix, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        if other.k != self.k {
            return Err(Error::DimensionMismatch {
                what: "block matrix dimension",
                expected: self.k,
                found: other.k,
            });
        }
        Self::new(
            self.k,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Simultaneous row/column permutation: `result[perm[r], perm[s]] = self[r, s]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.k)?;
        let k = self.k;
        let mut data = vec![0.0; k * k];
        for r in 0..k {
            for s in 0..k {
                data[perm[r] * k + perm[s]] = self.get(r, s);
            }
        }
        Ok(BlockMatrix { k, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn has_undetermined(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &BlockMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Which family of link dynamics a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    TypeI,
    #[serde(rename = "type_ii")]
    TypeII,
    General,
}

/// Per-step link transition probabilities: `f = P(0 -> 1)`, `h = P(1 -> 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub f: BlockMatrix,
    pub h: BlockMatrix,
}

/// Parameters of the link-persistence dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DynamicsParams {
    /// Addition rate `mu * W`, deletion rate `mu`.
    TypeI { w: BlockMatrix, mu: BlockMatrix },
    /// Copy the previous edge with probability `xi`, otherwise redraw from `W`.
    #[serde(rename = "type_ii")]
    TypeII { w: BlockMatrix, xi: f64 },
    /// First-snapshot matrix plus one explicit transition per later snapshot.
    General {
        w1: BlockMatrix,
        steps: Vec<Transition>,
    },
}

impl DynamicsParams {
    pub fn type1(w: BlockMatrix, mu: BlockMatrix) -> Result<Self> {
        let d = DynamicsParams::TypeI { w, mu };
        d.validate()?;
        Ok(d)
    }

    pub fn type2(w: BlockMatrix, xi: f64) -> Result<Self> {
        let d = DynamicsParams::TypeII { w, xi };
        d.validate()?;
        Ok(d)
    }

    /// Type-II dynamic with a time-varying `W^t`; `ws[0]` is `W^1`.
    pub fn type2_schedule(ws: &[BlockMatrix], xi: f64) -> Result<Self> {
        check_unit("xi", xi)?;
        let Some(w1) = ws.first() else {
            return invalid_arg("empty W schedule");
        };
        let steps = ws[1..]
            .iter()
            .map(|w| {
                Ok(Transition {
                    f: w.map(|v| (1.0 - xi) * v)?,
                    h: w.map(|v| xi + (1.0 - xi) * v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = DynamicsParams::General {
            w1: w1.clone(),
            steps,
        };
        d.validate()?;
        Ok(d)
    }

    /// Type-I dynamic with a time-varying `W^t` and fixed `mu`; `ws[0]` is `W^1`.
    pub fn type1_schedule(ws: &[BlockMatrix], mu: &BlockMatrix) -> Result<Self> {
        let Some(w1) = ws.first() else {
            return invalid_arg("empty W schedule");
        };
        let steps = ws[1..]
            .iter()
            .map(|w| {
                Ok(Transition {
                    f: w.zip_map(mu, |w, m| m * w)?,
                    h: mu.map(|m| 1.0 - m)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = DynamicsParams::General {
            w1: w1.clone(),
            steps,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn tag(&self) -> ModelTag {
        match self {
            DynamicsParams::TypeI { .. } => ModelTag::TypeI,
            DynamicsParams::TypeII { .. } => ModelTag::TypeII,
            DynamicsParams::General { .. } => ModelTag::General,
        }
    }

    pub fn k(&self) -> usize {
        self.initial().k()
    }

    /// `W^1`, the block matrix of the first snapshot.
    pub fn initial(&self) -> &BlockMatrix {
        match self {
            DynamicsParams::TypeI { w, .. } | DynamicsParams::TypeII { w, .. } => w,
            DynamicsParams::General { w1, .. } => w1,
        }
    }

    /// Largest sequence length these parameters can drive.
    pub fn max_len(&self) -> usize {
        match self {
            DynamicsParams::General { steps, .. } => steps.len() + 1,
            _ => usize::MAX,
        }
    }

    /// `(f, h)` for block pair `(r, s)` on the transition from snapshot
    /// `step` to `step + 1` (both 0-based).
    #[inline]
    pub fn transition(&self, step: usize, r: usize, s: usize) -> (f64, f64) {
        match self {
            DynamicsParams::TypeI { w, mu } => {
                let (w, m) = (w.get(r, s), mu.get(r, s));
                (m * w, 1.0 - m)
            }
            DynamicsParams::TypeII { w, xi } => {
                let w = w.get(r, s);
                ((1.0 - xi) * w, xi + (1.0 - xi) * w)
            }
            DynamicsParams::General { steps, .. } => {
                let tr = &steps[step];
                (tr.f.get(r, s), tr.h.get(r, s))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let no_nan = |name: &str, b: &BlockMatrix| -> Result<()> {
            if b.has_undetermined() {
                return Err(Error::InvalidDynamics(format!("{name} has undetermined entries")));
            }
            if b.k() != k {
                return Err(Error::InvalidDynamics(format!(
                    "{name} is {}x{0}, expected {k}x{k}",
                    b.k()
                )));
            }
            Ok(())
        };
        match self {
            DynamicsParams::TypeI { w, mu } => {
                no_nan("W", w)?;
                no_nan("mu", mu)?;
                for r in 0..k {
                    for s in 0..k {
                        let (wv, m) = (w.get(r, s), mu.get(r, s));
                        if m * (1.0 + wv) > 1.0 + PARAM_TOL {
                            return Err(Error::InvalidDynamics(format!(
                                "mu(1+W) = {} > 1 at ({r},{s})",
                                m * (1.0 + wv)
                            )));
                        }
                    }
                }
            }
            DynamicsParams::TypeII { w, xi } => {
                no_nan("W", w)?;
                check_unit("xi", *xi)?;
            }
            DynamicsParams::General { w1, steps } => {
                no_nan("W1", w1)?;
                for tr in steps {
                    no_nan("f", &tr.f)?;
                    no_nan("h", &tr.h)?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidDynamics(format!("{name} = {v} outside [0,1]")))
    }
}

/// Exogenous majority indicators for the `T - 1` transitions.
///
/// Row `step` describes the transition from snapshot `step` to `step + 1`;
/// an entry of 1 means the node keeps its community.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityMask {
    steps: usize,
    n: usize,
    data: Vec<u8>,
}

impl MajorityMask {
    pub fn all_majority(steps: usize, n: usize) -> Self {
        MajorityMask {
            steps,
            n,
            data: vec![1; steps * n],
        }
    }

    pub fn new(steps: usize, n: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != steps * n {
            return Err(Error::DimensionMismatch {
                what: "mask entries",
                expected: steps * n,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMask(format!(
                "entry ({},{}) is {}",
                pos / n.max(1),
                pos % n.max(1),
                data[pos]
            )));
        }
        Ok(MajorityMask { steps, n, data })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_majority(&self, step: usize, i: usize) -> bool {
        self.data[step * self.n + i] == 1
    }

    pub fn set(&mut self, step: usize, i: usize, majority: bool) {
        self.data[step * self.n + i] = majority as u8;
    }

    pub fn minorities(&self, step: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.is_majority(step, i)).collect()
    }

    pub fn is_all_majority(&self) -> bool {
        self.data.iter().all(|&v| v == 1)
    }

    /// Nodes that are majority at every step in `0..upto`.
    pub fn stable_nodes(&self, upto: usize) -> Vec<usize> {
        let upto = upto.min(self.steps);
        (0..self.n)
            .filter(|&i| (0..upto).all(|s| self.is_majority(s, i)))
            .collect()
    }

    /// Mask restricted to the listed nodes.
    pub fn restrict(&self, nodes: &[usize]) -> MajorityMask {
        let mut data = Vec::with_capacity(self.steps * nodes.len());
        for s in 0..self.steps {
            data.extend(nodes.iter().map(|&i| self.data[s * self.n + i]));
        }
        MajorityMask {
            steps: self.steps,
            n: nodes.len(),
            data,
        }
    }
}

impl fmt::Debug for MajorityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let minorities = self.data.iter().filter(|&&v| v == 0).count();
        f.debug_struct("MajorityMask")
            .field("steps", &self.steps)
            .field("n", &self.n)
            .field("minority_entries", &minorities)
            .finish()
    }
}
