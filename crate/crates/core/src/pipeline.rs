//! Membership inference for a whole sequence with fixed communities.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::graph::{GraphSequence, Membership};
use crate::recover::{recover_each, spectral_mean, RecoverOpts};
use crate::unify::{unify_cm_with, unify_lp, unify_threshold_detailed};

/// How per-snapshot estimates are merged into one membership.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum UnifyMethod {
    /// Spectral clustering of the averaged co-membership matrix.
    Cm { eps: f64 },
    /// Label alignment to the first estimate, then majority vote.
    Lp,
    /// Connected components of pairs co-clustered at least `c` times.
    Threshold { c: usize },
    /// No per-snapshot step: cluster the mean adjacency matrix directly.
    SpectralMean,
}

impl Default for UnifyMethod {
    fn default() -> Self {
        UnifyMethod::Cm { eps: 0.0 }
    }
}

/// Recovers each snapshot separately and merges the estimates.
pub fn infer_memberships(
    seq: &GraphSequence,
    k: usize,
    method: UnifyMethod,
    opts: &RecoverOpts,
) -> Result<Membership> {
    if let UnifyMethod::SpectralMean = method {
        return spectral_mean(seq, k, opts);
    }
    unify_estimates(&recover_each(seq, k, opts)?, method, opts)
}

/// Merges per-snapshot estimates. [`UnifyMethod::SpectralMean`] needs the
/// graphs themselves and is rejected here.
pub fn unify_estimates(estimates: &[Membership], method: UnifyMethod, opts: &RecoverOpts) -> Result<Membership> {
    match method {
        UnifyMethod::Cm { eps } => unify_cm_with(estimates, eps, opts),
        UnifyMethod::Lp => unify_lp(estimates),
        UnifyMethod::Threshold { c } => Ok(unify_threshold_detailed(estimates, c, opts)?.membership),
        UnifyMethod::SpectralMean => invalid_arg("spectral mean works on graphs, not on estimates"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use crate::metrics::nmi;

    fn two_cliques(n: usize) -> Adjacency {
        let h = n / 2;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if (i < h) == (j < h) {
                    edges.push((i, j));
                }
            }
        }
        Adjacency::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn all_methods_find_planted_cliques() {
        let seq = GraphSequence::new(vec![two_cliques(12); 3]).unwrap();
        let truth = Membership::from_indices((0..12).map(|i| (i >= 6) as usize).collect(), 2).unwrap();
        for m in [
            UnifyMethod::Cm { eps: 0.0 },
            UnifyMethod::Lp,
            UnifyMethod::Threshold { c: 2 },
            UnifyMethod::SpectralMean,
        ] {
            let g = infer_memberships(&seq, 2, m, &RecoverOpts::default()).unwrap();
            assert_eq!(nmi(&g, &truth).unwrap(), 1.0, "{m:?}");
        }
    }
}
