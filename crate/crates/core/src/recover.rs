//! Single-snapshot community recovery by spectral clustering.
//!
//! Nodes are embedded with the leading eigenvectors of the normalized
//! affinity `D^{-1/2} A D^{-1/2}` (the smallest eigenvectors of the
//! symmetric normalized Laplacian), rows are scaled to unit length and
//! clustered with k-means. Nodes with zero degree are left out of the
//! embedding and join the largest recovered community afterwards.
//!
//! [`cm_recover`] can optionally follow k-means with a few passes of
//! likelihood-based node reassignment ([`refine`]), which brings the
//! misclassification rate on dense graphs close to the optimal one.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::graph::{Adjacency, GraphSequence, Membership};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverOpts {
    pub seed: u64,
    /// Independent k-means++ restarts; the lowest inertia wins.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once an iteration improves inertia by less than this.
    pub tol: f64,
    /// Likelihood refinement passes applied by [`cm_recover`] after k-means.
    #[serde(default)]
    pub refine_passes: usize,
}

impl Default for RecoverOpts {
    fn default() -> Self {
        RecoverOpts {
            seed: 0,
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
            refine_passes: 0,
        }
    }
}

impl RecoverOpts {
    pub fn with_seed(seed: u64) -> Self {
        RecoverOpts {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    /// Cluster index per row, `0..k`.
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let x = points[(i, d)] - centroids[(c, d)];
            x * x
        })
        .sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (m, dim) = points.shape();
    let mut centroids = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..m);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..m)
        };
        centroids.row_mut(c).copy_from(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>, opts: &RecoverOpts) -> KMeans {
    let (m, dim) = points.shape();
    let k = centroids.nrows();
    let mut labels = vec![0; m];
    let mut inertia = f64::INFINITY;
    for _ in 0..opts.max_iter.max(1) {
        let mut dists = vec![0.0; m];
        let mut current = 0.0;
        for i in 0..m {
            let (c, d) = nearest(points, i, &centroids);
            labels[i] = c;
            dists[i] = d;
            current += d;
        }
        let converged = inertia - current <= opts.tol;
        inertia = current;
        if converged {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..m {
            counts[labels[i]] += 1;
            for d in 0..dim {
                sums[(labels[i], d)] += points[(i, d)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[(c, d)] = sums[(c, d)] / counts[c] as f64;
                }
            } else {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..m)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                centroids.row_mut(c).copy_from(&points.row(far));
                dists[far] = 0.0;
            }
        }
    }
    KMeans {
        labels,
        centroids,
        inertia,
    }
}

/// k-means on the rows of `points` with k-means++ seeding and restarts.
pub fn kmeans(points: &DMatrix<f64>, k: usize, opts: &RecoverOpts) -> Result<KMeans> {
    let m = points.nrows();
    if k == 0 || k > m {
        return invalid_arg(format!("k-means with k={k} on {m} points"));
    }
    let runs: Vec<KMeans> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(opts.seed, Domain::KMeans, r as u64, 0);
            lloyd(points, seed_plus_plus(points, k, &mut rng), opts)
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart"))
}

/// Row-normalized spectral embedding of a nonnegative symmetric affinity
/// whose rows all have positive sums.
///
/// Eigenvectors are taken in order of eigenvalue magnitude, so strongly
/// disassortative structure (large negative eigenvalues) is kept too.
pub fn spectral_embedding(affinity: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let m = affinity.nrows();
    let inv_sqrt: Vec<f64> = (0..m)
        .map(|i| {
            let d: f64 = affinity.row(i).sum();
            if d > 0.0 {
                d.sqrt().recip()
            } else {
                0.0
            }
        })
        .collect();
    let normalized = DMatrix::from_fn(m, m, |i, j| affinity[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = normalized.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let mut emb = DMatrix::from_fn(m, dim, |i, c| eig.eigenvectors[(i, order[c])]);
    for i in 0..m {
        let norm = emb.row(i).norm();
        if norm > 0.0 {
            emb.row_mut(i).scale_mut(norm.recip());
        }
    }
    emb
}

/// Spectral clustering of a nonnegative symmetric affinity matrix into at most `k` groups.
pub fn spectral_partition(affinity: &DMatrix<f64>, k: usize, opts: &RecoverOpts) -> Result<Membership> {
    spectral_partition_into(affinity, k, k, opts)
}

/// As [`spectral_partition`], but forms only `clusters <= k` groups while
/// labelling the result with `k` communities.
pub fn spectral_partition_into(
    affinity: &DMatrix<f64>,
    clusters: usize,
    k: usize,
    opts: &RecoverOpts,
) -> Result<Membership> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return invalid_arg("affinity matrix must be square");
    }
    if k < 2 || k > n {
        return invalid_arg(format!("k={k} must satisfy 2 <= k <= n={n}"));
    }
    if clusters == 0 || clusters > k {
        return invalid_arg(format!("cluster count {clusters} not in 1..={k}"));
    }
    let active: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| affinity[(i, j)] > 0.0))
        .collect();
    if active.is_empty() || clusters == 1 {
        return Membership::from_indices(vec![0; n], k);
    }
    let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| affinity[(active[a], active[b])]);
    let k_eff = clusters.min(active.len());
    let emb = spectral_embedding(&sub, k_eff);
    let km = kmeans(&emb, k_eff, opts)?;

    let mut sizes = vec![0usize; k];
    for &l in &km.labels {
        sizes[l] += 1;
    }
    let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap_or(0);
    let mut labels = vec![largest; n];
    for (a, &i) in active.iter().enumerate() {
        labels[i] = km.labels[a];
    }
    Ok(Membership::from_indices(labels, k)?.canonical())
}

/// Recovers a `k`-way partition of one snapshot.
pub fn cm_recover(a: &Adjacency, k: usize, opts: &RecoverOpts) -> Result<Membership> {
    let g = spectral_partition(&a.to_matrix(), k, opts)?;
    if opts.refine_passes == 0 {
        return Ok(g);
    }
    let refined = refine(a, &g, opts.refine_passes)?;
    let sizes = refined.block_sizes();
    let largest = (0..k).max_by(|&x, &y| sizes[x].cmp(&sizes[y]).then(y.cmp(&x))).unwrap_or(0);
    let labels = (0..a.n())
        .map(|i| if a.degree(i) == 0 { largest } else { refined.index(i) })
        .collect();
    Ok(Membership::from_indices(labels, k)?.canonical())
}

/// Reassigns every non-isolated node to the community under which its edges
/// are most likely, given block densities estimated from the current
/// partition. All nodes move simultaneously; a pass that changes nothing
/// ends the loop.
pub fn refine(a: &Adjacency, g: &Membership, passes: usize) -> Result<Membership> {
    let (n, k) = (a.n(), g.k());
    if g.n() != n {
        return invalid_arg("membership and adjacency sizes differ");
    }
    let mut labels = g.indices().to_vec();
    for _ in 0..passes {
        let mut sizes = vec![0.0f64; k];
        for &l in &labels {
            sizes[l] += 1.0;
        }
        let counts: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut c = vec![0.0; k];
                for (j, &e) in a.row(i).iter().enumerate() {
                    if e == 1 {
                        c[labels[j]] += 1.0;
                    }
                }
                c
            })
            .collect();
        let mut edges = vec![0.0; k * k];
        for i in 0..n {
            for r in 0..k {
                edges[labels[i] * k + r] += counts[i][r];
            }
        }
        let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
        let density: Vec<f64> = (0..k * k)
            .map(|p| {
                let (c, r) = (p / k, p % k);
                let pairs = if c == r { sizes[c] * (sizes[c] - 1.0) } else { sizes[c] * sizes[r] };
                if pairs > 0.0 { clamp(edges[p] / pairs) } else { 0.5 }
            })
            .collect();
        let next: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| {
                let own = labels[i];
                if counts[i].iter().all(|&c| c == 0.0) {
                    return own;
                }
                let score = |c: usize| -> f64 {
                    (0..k)
                        .map(|r| {
                            let others = sizes[r] - (r == own) as u8 as f64;
                            let p = density[c * k + r];
                            counts[i][r] * p.ln() + (others - counts[i][r]) * (1.0 - p).ln()
                        })
                        .sum()
                };
                let mut best = (own, score(own));
                for c in 0..k {
                    let v = score(c);
                    if v > best.1 {
                        best = (c, v);
                    }
                }
                best.0
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Membership::from_indices(labels, k)
}

/// Clusters the time-averaged adjacency matrix.
pub fn spectral_mean(seq: &GraphSequence, k: usize, opts: &RecoverOpts) -> Result<Membership> {
    spectral_partition(&seq.mean_matrix(), k, opts)
}

/// Runs [`cm_recover`] on every snapshot.
pub fn recover_each(seq: &GraphSequence, k: usize, opts: &RecoverOpts) -> Result<Vec<Membership>> {
    seq.snapshots()
        .par_iter()
        .map(|a| cm_recover(a, k, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques(size: usize) -> Adjacency {
        let mut a = Adjacency::empty(2 * size);
        for block in 0..2 {
            for i in 0..size {
                for j in (i + 1)..size {
                    a.set_edge(block * size + i, block * size + j, true);
                }
            }
        }
        a
    }

    #[test]
    fn disjoint_cliques_are_separated() {
        let g = cm_recover(&two_cliques(10), 2, &RecoverOpts::default()).unwrap();
        let expected: Vec<usize> = (0..20).map(|i| 1 + (i >= 10) as usize).collect();
        assert_eq!(g.labels(), expected);
    }

    #[test]
    fn complete_multipartite_is_separated() {
        let n = 24;
        let part = |i: usize| i / 6;
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| part(i) != part(j))
            .collect();
        let a = Adjacency::from_edges(n, &edges).unwrap();
        let g = cm_recover(&a, 4, &RecoverOpts::default()).unwrap();
        let expected: Vec<usize> = (0..n).map(|i| 1 + part(i)).collect();
        assert_eq!(g.labels(), expected);
    }

    #[test]
    fn isolated_nodes_join_largest_community() {
        let mut a = Adjacency::empty(13);
        for i in 0..6 {
            for j in (i + 1)..6 {
                a.set_edge(i, j, true);
            }
        }
        for i in 6..10 {
            for j in (i + 1)..10 {
                a.set_edge(i, j, true);
            }
        }
        let g = cm_recover(&a, 2, &RecoverOpts::default()).unwrap();
        for i in 10..13 {
            assert_eq!(g.label(i), g.label(0));
        }
        assert_ne!(g.label(6), g.label(0));
    }

    #[test]
    fn empty_graph_is_one_community() {
        let g = cm_recover(&Adjacency::empty(5), 2, &RecoverOpts::default()).unwrap();
        assert_eq!(g.labels(), vec![1; 5]);
    }

    #[test]
    fn complete_graph_gives_valid_membership() {
        let g = cm_recover(&Adjacency::complete(12), 2, &RecoverOpts::default()).unwrap();
        assert_eq!(g.n(), 12);
        assert!(g.nonempty_count() <= 2);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(cm_recover(&Adjacency::complete(3), 4, &RecoverOpts::default()).is_err());
        assert!(cm_recover(&Adjacency::complete(3), 1, &RecoverOpts::default()).is_err());
    }

    #[test]
    fn mean_of_identical_snapshots_matches_single() {
        let a = two_cliques(8);
        let seq = GraphSequence::new(vec![a.clone(), a.clone(), a.clone()]).unwrap();
        let opts = RecoverOpts::with_seed(4);
        assert_eq!(spectral_mean(&seq, 2, &opts).unwrap(), cm_recover(&a, 2, &opts).unwrap());
    }

    #[test]
    fn kmeans_separates_obvious_groups() {
        let pts = DMatrix::from_row_slice(6, 1, &[0.0, 0.1, 0.2, 5.0, 5.1, 5.2]);
        let km = kmeans(&pts, 2, &RecoverOpts::default()).unwrap();
        assert_eq!(km.labels[0], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[5]);
        assert_ne!(km.labels[0], km.labels[3]);
        assert!((km.inertia - 0.04).abs() < 1e-9);
    }

    #[test]
    fn refinement_keeps_isolated_nodes_in_largest_community() {
        let mut a = two_cliques(6);
        a.set_edge(0, 6, true);
        let a = {
            let mut big = Adjacency::empty(15);
            for (i, j) in a.edges() {
                big.set_edge(i, j, true);
            }
            big
        };
        let opts = RecoverOpts {
            refine_passes: 3,
            ..Default::default()
        };
        let g = cm_recover(&a, 2, &opts).unwrap();
        let sizes = g.block_sizes();
        let largest = if sizes[0] >= sizes[1] { 1 } else { 2 };
        for i in 12..15 {
            assert_eq!(g.label(i), largest);
        }
        assert_ne!(g.label(1), g.label(7));
    }

    #[test]
    fn refinement_fixes_a_planted_mistake() {
        let a = two_cliques(8);
        let mut labels: Vec<usize> = (0..16).map(|i| (i >= 8) as usize).collect();
        labels[3] = 1;
        let g = Membership::from_indices(labels, 2).unwrap();
        let fixed = refine(&a, &g, 2).unwrap();
        assert_eq!(fixed.index(3), 0);
    }

    #[test]
    fn kmeans_with_repeated_points() {
        let pts = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        let km = kmeans(&pts, 3, &RecoverOpts::default()).unwrap();
        assert_eq!(km.inertia, 0.0);
    }
}
