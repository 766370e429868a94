//! Evaluation metrics: partition agreement, block-matrix error and AUC.

use nalgebra::DMatrix;

use crate::assignment::{for_each_permutation, max_weight_assignment};
use crate::error::{invalid_arg, Error, Result};
use crate::graph::{BlockMatrix, Membership};

fn contingency(a: &Membership, b: &Membership) -> Result<DMatrix<f64>> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            what: "membership length",
            expected: a.n(),
            found: b.n(),
        });
    }
    let mut c = DMatrix::zeros(a.k(), b.k());
    for i in 0..a.n() {
        c[(a.index(i), b.index(i))] += 1.0;
    }
    Ok(c)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information (arithmetic-mean normalization, natural
/// logs). Two single-cluster partitions score 1.
pub fn nmi(a: &Membership, b: &Membership) -> Result<f64> {
    let c = contingency(a, b)?;
    let n = a.n() as f64;
    if a.n() == 0 {
        return Ok(1.0);
    }
    let rows: Vec<f64> = c.row_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = c.column_iter().map(|col| col.sum()).collect();
    let ha = entropy(rows.iter().copied(), n);
    let hb = entropy(cols.iter().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for r in 0..c.nrows() {
        for s in 0..c.ncols() {
            let nij = c[(r, s)];
            if nij > 0.0 {
                mi += nij / n * (n * nij / (rows[r] * cols[s])).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// `1 - nmi`.
pub fn nmi_error(a: &Membership, b: &Membership) -> Result<f64> {
    Ok(1.0 - nmi(a, b)?)
}

/// Smallest fraction of mismatched nodes over all relabelings of `g_hat`.
pub fn misclassification(g_hat: &Membership, g_star: &Membership) -> Result<f64> {
    let c = contingency(g_hat, g_star)?;
    if g_hat.n() == 0 {
        return Ok(0.0);
    }
    let (r, s) = c.shape();
    let size = r.max(s);
    let padded = DMatrix::from_fn(size, size, |i, j| if i < r && j < s { c[(i, j)] } else { 0.0 });
    let cols = max_weight_assignment(&padded);
    let matched: f64 = cols.iter().enumerate().map(|(i, &j)| padded[(i, j)]).sum();
    Ok(1.0 - matched / g_hat.n() as f64)
}

/// Permutation of the labels of `g` that best matches `reference`
/// (`perm[label_in_g] = label_in_reference`, 0-based).
pub fn best_label_map(g: &Membership, reference: &Membership) -> Result<Vec<usize>> {
    if g.k() != reference.k() {
        return Err(Error::DimensionMismatch {
            what: "membership k",
            expected: reference.k(),
            found: g.k(),
        });
    }
    Ok(max_weight_assignment(&contingency(g, reference)?))
}

/// `||W_hat_sigma - W||_F / ||W||_F`, minimized over simultaneous row and
/// column permutations `sigma` of `W_hat`.
pub fn frob_error(w_hat: &BlockMatrix, w_true: &BlockMatrix) -> Result<f64> {
    let k = w_true.k();
    if w_hat.k() != k {
        return Err(Error::DimensionMismatch {
            what: "block matrix dimension",
            expected: k,
            found: w_hat.k(),
        });
    }
    let norm = w_true.frobenius_norm();
    if norm == 0.0 {
        return invalid_arg("reference block matrix is zero");
    }
    if k > 8 {
        return invalid_arg(format!("permutation search limited to k <= 8, got {k}"));
    }
    let mut best = f64::INFINITY;
    for_each_permutation(k, |p| {
        let mut sq = 0.0;
        for r in 0..k {
            for s in 0..k {
                let d = w_hat.get(r, s) - w_true.get(p[r], p[s]);
                sq += d * d;
            }
        }
        if sq < best {
            best = sq;
        }
    });
    Ok(best.sqrt() / norm)
}

/// Frobenius error after mapping `W_hat` through a known label alignment.
pub fn frob_error_aligned(w_hat: &BlockMatrix, w_true: &BlockMatrix, perm: &[usize]) -> Result<f64> {
    let norm = w_true.frobenius_norm();
    if norm == 0.0 {
        return invalid_arg("reference block matrix is zero");
    }
    let diff = w_hat.permuted(perm)?.zip_map(w_true, |a, b| (a - b).abs())?;
    Ok(diff.frobenius_norm() / norm)
}

pub fn relative_error(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return invalid_arg("relative error against zero");
    }
    Ok((estimate - truth).abs() / truth.abs())
}

/// Area under the ROC curve as the Mann-Whitney statistic, with tied scores
/// given mid-ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs labels",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return invalid_arg("AUC needs at least one positive and one negative");
    }
    if scores.iter().any(|s| s.is_nan()) {
        return invalid_arg("NaN score");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&p| labels[p]).count() as f64 * mid;
        i = j + 1;
    }
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(labels: &[usize], k: usize) -> Membership {
        Membership::new(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn nmi_examples() {
        let a = g(&[1, 1, 2, 2, 3], 3);
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&a, &g(&[3, 3, 1, 1, 2], 3)).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&g(&[1, 1, 2, 2], 2), &g(&[1, 2, 1, 2], 2)).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&g(&[1, 1, 1], 2), &g(&[2, 2, 2], 2)).unwrap(), 1.0);
    }

    #[test]
    fn nmi_against_hand_value() {
        let a = g(&[1, 1, 2, 2], 2);
        let b = g(&[1, 1, 1, 2], 2);
        let ln = f64::ln;
        let ha = ln(2.0);
        let hb = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
        let mi = 0.5 * ln(0.5 / (0.5 * 0.75)) + 0.25 * ln(0.25 / (0.5 * 0.75)) + 0.25 * ln(0.25 / (0.5 * 0.25));
        let expected = mi / ((ha + hb) / 2.0);
        assert!((nmi(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn misclassification_examples() {
        let star = Membership::from_indices((0..100).map(|i| i % 2).collect(), 2).unwrap();
        assert_eq!(misclassification(&star, &star).unwrap(), 0.0);
        let mut flipped = star.indices().to_vec();
        flipped[7] = 1 - flipped[7];
        let flipped = Membership::from_indices(flipped, 2).unwrap();
        assert!((misclassification(&flipped, &star).unwrap() - 0.01).abs() < 1e-12);
        let swapped = star.relabeled(&[1, 0]).unwrap();
        assert_eq!(misclassification(&swapped, &star).unwrap(), 0.0);
    }

    #[test]
    fn frob_examples() {
        let w = BlockMatrix::from_rows(&[&[0.3, 0.1], &[0.1, 0.2]]).unwrap();
        assert_eq!(frob_error(&w, &w).unwrap(), 0.0);
        let doubled = w.map(|v| 2.0 * v).unwrap();
        assert!((frob_error(&doubled, &w).unwrap() - 1.0).abs() < 1e-12);
        let swapped = w.permuted(&[1, 0]).unwrap();
        assert_eq!(frob_error(&swapped, &w).unwrap(), 0.0);
        assert!(frob_error(&w, &BlockMatrix::constant(2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.1], &[true, false, true, false]).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    fn brute_misclassification(a: &Membership, b: &Membership) -> f64 {
        let mut best = 1.0f64;
        for_each_permutation(a.k(), |p| {
            let wrong = (0..a.n()).filter(|&i| p[a.index(i)] != b.index(i)).count();
            best = best.min(wrong as f64 / a.n() as f64);
        });
        best
    }

    proptest! {
        #[test]
        fn misclassification_matches_brute_force(
            a in prop::collection::vec(0usize..3, 1..40),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
            let a = Membership::from_indices(a, 3).unwrap();
            let b = Membership::from_indices(b, 3).unwrap();
            let fast = misclassification(&a, &b).unwrap();
            prop_assert!((fast - brute_misclassification(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn nmi_symmetric_and_relabel_invariant(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 2..50),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let a = Membership::from_indices(pairs.iter().map(|p| p.0).collect(), 4).unwrap();
            let b = Membership::from_indices(pairs.iter().map(|p| p.1).collect(), 4).unwrap();
            let v = nmi(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - nmi(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((v - nmi(&a.relabeled(&perm).unwrap(), &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn zero_misclassification_iff_unit_nmi(
            a in prop::collection::vec(0usize..3, 3..30),
            flip in any::<bool>(),
            pos in any::<prop::sample::Index>(),
        ) {
            let mut b = a.clone();
            if flip {
                let i = pos.index(b.len());
                b[i] = (b[i] + 1) % 3;
            }
            let a = Membership::from_indices(a, 3).unwrap();
            let b = Membership::from_indices(b, 3).unwrap();
            prop_assume!(a.nonempty_count() == 3 && b.nonempty_count() == 3);
            let zero = misclassification(&a, &b).unwrap() == 0.0;
            let one = (nmi(&a, &b).unwrap() - 1.0).abs() < 1e-12;
            prop_assert_eq!(zero, one);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60),
        ) {
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 20.0).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 1.0).collect();
            prop_assert!((auc(&scores, &labels).unwrap() - auc(&mapped, &labels).unwrap()).abs() < 1e-12);
        }
    }
}
