//! Merging per-snapshot membership estimates into one.
//!
//! * [`unify_cm`] averages the estimates' cluster matrices and clusters the
//!   average spectrally.
//! * [`unify_lp`] aligns every estimate's labels to the first one by maximum
//!   weight bipartite matching and takes a per-node majority vote.
//! * [`unify_threshold`] links two nodes when at least `C` estimates put them
//!   together and reads communities off the connected components.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{invalid_arg, Error, Result};
use crate::graph::{check_permutation, Membership};
use crate::recover::{spectral_partition_into, RecoverOpts};

/// One-hot `n x k` encoding of a membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    k: usize,
    cols: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn from_membership(g: &Membership) -> Self {
        AssignmentMatrix {
            k: g.k(),
            cols: g.indices().to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.cols.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k, |i, c| (self.cols[i] == c) as u8 as f64)
    }

    /// `Q^T Q_ref`: entry `(c, d)` counts nodes labelled `c` here and `d` in the reference.
    pub fn overlap(&self, reference: &AssignmentMatrix) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.k, reference.k);
        for (&c, &d) in self.cols.iter().zip(&reference.cols) {
            m[(c, d)] += 1.0;
        }
        m
    }
}

/// A `k x k` permutation matrix stored as `perm[c] = d` for the single 1 in row `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMatrix {
    perm: Vec<usize>,
}

impl PermutationMatrix {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        check_permutation(&perm, perm.len())?;
        Ok(PermutationMatrix { perm })
    }

    pub fn identity(k: usize) -> Self {
        PermutationMatrix {
            perm: (0..k).collect(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.perm.len();
        DMatrix::from_fn(k, k, |c, d| (self.perm[c] == d) as u8 as f64)
    }

    /// `trace(tau^T W) = sum_c W[c, perm[c]]`.
    pub fn objective(&self, w: &DMatrix<f64>) -> f64 {
        self.perm.iter().enumerate().map(|(c, &d)| w[(c, d)]).sum()
    }
}

/// Permutation maximizing `trace(tau^T Q^T Q_ref)`: the relabeling of `q`
/// that agrees with `q_ref` on the most nodes.
pub fn align_permutation(q: &AssignmentMatrix, q_ref: &AssignmentMatrix) -> Result<PermutationMatrix> {
    if q.n() != q_ref.n() || q.k() != q_ref.k() {
        return Err(Error::DimensionMismatch {
            what: "assignment matrix shape",
            expected: q_ref.n(),
            found: q.n(),
        });
    }
    Ok(PermutationMatrix {
        perm: max_weight_assignment(&q.overlap(q_ref)),
    })
}

fn common_n(estimates: &[Membership]) -> Result<usize> {
    let Some(first) = estimates.first() else {
        return invalid_arg("no estimates to unify");
    };
    for g in estimates {
        if g.n() != first.n() {
            return Err(Error::DimensionMismatch {
                what: "estimate length",
                expected: first.n(),
                found: g.n(),
            });
        }
    }
    Ok(first.n())
}

fn common_k(estimates: &[Membership]) -> Result<usize> {
    let k = estimates.iter().map(Membership::k).max().unwrap_or(2);
    if let Some(g) = estimates.iter().find(|g| g.k() != k) {
        return Err(Error::DimensionMismatch {
            what: "estimate k",
            expected: k,
            found: g.k(),
        });
    }
    Ok(k)
}

/// Number of communities the unified output should have: the largest number
/// of nonempty labels among the inputs.
fn effective_k(estimates: &[Membership]) -> usize {
    estimates.iter().map(Membership::nonempty_count).max().unwrap_or(1)
}

/// Per-node majority vote after aligning every estimate to the first.
///
/// Inputs are put in first-occurrence label order before alignment, so the
/// result does not depend on how each input happens to be labelled. The
/// output uses the labels of the (canonicalized) first estimate; vote ties
/// go to the lowest label.
pub fn unify_lp(estimates: &[Membership]) -> Result<Membership> {
    let n = common_n(estimates)?;
    let k = common_k(estimates)?;
    let canon: Vec<Membership> = estimates.iter().map(Membership::canonical).collect();
    let q1 = AssignmentMatrix::from_membership(&canon[0]);
    let perms: Vec<PermutationMatrix> = canon
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            if t == 0 {
                Ok(PermutationMatrix::identity(k))
            } else {
                align_permutation(&AssignmentMatrix::from_membership(g), &q1)
            }
        })
        .collect::<Result<_>>()?;
    let mut votes = vec![0u32; n * k];
    for (g, tau) in canon.iter().zip(&perms) {
        for i in 0..n {
            votes[i * k + tau.perm[g.index(i)]] += 1;
        }
    }
    let labels = (0..n)
        .map(|i| {
            let row = &votes[i * k..(i + 1) * k];
            let best = *row.iter().max().expect("k >= 2");
            row.iter().position(|&v| v == best).expect("max exists")
        })
        .collect();
    Membership::from_indices(labels, k)
}

/// `S = sum_t Y_t / ((1 - eps)^2 T)` including the unit diagonal.
pub fn consensus_matrix(estimates: &[Membership], eps: f64) -> Result<DMatrix<f64>> {
    let n = common_n(estimates)?;
    if !(0.0..1.0).contains(&eps) {
        return invalid_arg(format!("eps={eps} not in [0,1)"));
    }
    let counts = co_membership_counts(estimates, n);
    let scale = 1.0 / ((1.0 - eps).powi(2) * estimates.len() as f64);
    Ok(DMatrix::from_fn(n, n, |i, j| counts[i * n + j] as f64 * scale))
}

fn co_membership_counts(estimates: &[Membership], n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n * n];
    for g in estimates {
        let blocks = g.blocks();
        for block in &blocks {
            for &i in block {
                for &j in block {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    counts
}

/// Spectral k-means on the averaged cluster matrix.
pub fn unify_cm(estimates: &[Membership], eps: f64) -> Result<Membership> {
    unify_cm_with(estimates, eps, &RecoverOpts::default())
}

pub fn unify_cm_with(estimates: &[Membership], eps: f64, opts: &RecoverOpts) -> Result<Membership> {
    let s = consensus_matrix(estimates, eps)?;
    let k = estimates.iter().map(Membership::k).max().expect("non-empty");
    spectral_partition_into(&s, effective_k(estimates), k, opts)
}

#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    pub membership: Membership,
    /// Connected components of the thresholded co-membership graph.
    pub components: usize,
    /// Whether the component count differed from the target and spectral
    /// clustering of the thresholded graph was used instead.
    pub used_fallback: bool,
}

/// Links nodes grouped together by at least `c` estimates and returns the
/// connected components, falling back to spectral clustering when their
/// number differs from the expected community count.
pub fn unify_threshold(estimates: &[Membership], c: usize) -> Result<Membership> {
    Ok(unify_threshold_detailed(estimates, c, &RecoverOpts::default())?.membership)
}

pub fn unify_threshold_detailed(
    estimates: &[Membership],
    c: usize,
    opts: &RecoverOpts,
) -> Result<ThresholdOutcome> {
    let n = common_n(estimates)?;
    let t = estimates.len();
    if c == 0 || c > t {
        return invalid_arg(format!("threshold C={c} must be in 1..={t}"));
    }
    let k = estimates.iter().map(Membership::k).max().expect("non-empty");
    let k_eff = effective_k(estimates);
    let counts = co_membership_counts(estimates, n);
    let linked = |i: usize, j: usize| i != j && counts[i * n + j] as usize >= c;

    let mut component = vec![usize::MAX; n];
    let mut components = 0;
    for root in 0..n {
        if component[root] != usize::MAX {
            continue;
        }
        component[root] = components;
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if component[j] == usize::MAX && linked(i, j) {
                    component[j] = components;
                    stack.push(j);
                }
            }
        }
        components += 1;
    }

    if components == k_eff {
        return Ok(ThresholdOutcome {
            membership: Membership::from_indices(component, k)?,
            components,
            used_fallback: false,
        });
    }
    let au = DMatrix::from_fn(n, n, |i, j| linked(i, j) as u8 as f64);
    Ok(ThresholdOutcome {
        membership: spectral_partition_into(&au, k_eff.min(n), k, opts)?,
        components,
        used_fallback: true,
    })
}
