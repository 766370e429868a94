//! Seeded synthetic graph sequences.
//!
//! Every pair of nodes evolves as a two-state Markov chain whose transition
//! probabilities depend on the current community labels of its endpoints.
//! One uniform draw is consumed per unordered pair and snapshot, from the
//! stream of the pair's lower-index node, so the output does not depend on
//! how rows are scheduled across threads.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{Adjacency, BlockMatrix, DynamicsParams, GraphSequence, MajorityMask, Membership};
use crate::rng::{stream, Domain};

/// How communities evolve over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CommunityModel {
    Fixed,
    Changing { minorities: MinoritySchedule },
}

/// Which nodes switch community at each transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinoritySchedule {
    /// From transition `start` on, `round(fraction * eligible)` nodes are
    /// drawn uniformly among nodes that have never been minority.
    Fraction { fraction: f64, start: usize },
    /// Explicit 0-based node sets, one per transition.
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub k: usize,
    /// Number of snapshots `T`.
    pub snapshots: usize,
    /// Community prior; uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub dynamics: DynamicsParams,
    pub community: CommunityModel,
    pub seed: u64,
}

impl GenConfig {
    pub fn fixed(n: usize, snapshots: usize, dynamics: DynamicsParams, seed: u64) -> Self {
        GenConfig {
            n,
            k: dynamics.k(),
            snapshots,
            prior: None,
            dynamics,
            community: CommunityModel::Fixed,
            seed,
        }
    }

    pub fn changing(
        n: usize,
        snapshots: usize,
        dynamics: DynamicsParams,
        minorities: MinoritySchedule,
        seed: u64,
    ) -> Self {
        GenConfig {
            community: CommunityModel::Changing { minorities },
            ..Self::fixed(n, snapshots, dynamics, seed)
        }
    }

    fn prior_cdf(&self) -> Result<Vec<f64>> {
        let prior = match &self.prior {
            Some(p) => p.clone(),
            None => vec![1.0 / self.k as f64; self.k],
        };
        if prior.len() != self.k {
            return Err(Error::DimensionMismatch {
                what: "prior length",
                expected: self.k,
                found: prior.len(),
            });
        }
        if prior.iter().any(|&p| !(p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid_arg(format!("prior {prior:?} is not a probability vector"));
        }
        Ok(prior
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.snapshots == 0 {
            return invalid_arg("n and T must be positive");
        }
        if self.k < 2 {
            return invalid_arg(format!("k={} must be at least 2", self.k));
        }
        if self.dynamics.k() != self.k {
            return Err(Error::DimensionMismatch {
                what: "dynamics block dimension",
                expected: self.k,
                found: self.dynamics.k(),
            });
        }
        self.dynamics.validate()?;
        if self.snapshots > self.dynamics.max_len() {
            return invalid_arg(format!(
                "dynamics cover {} snapshots, {} requested",
                self.dynamics.max_len(),
                self.snapshots
            ));
        }
        self.prior_cdf()?;
        if let CommunityModel::Changing { minorities } = &self.community {
            match minorities {
                MinoritySchedule::Fraction { fraction, .. } => {
                    if !(0.0..1.0).contains(fraction) {
                        return invalid_arg(format!("minority fraction {fraction} not in [0,1)"));
                    }
                }
                MinoritySchedule::Explicit(sets) => {
                    if sets.len() != self.snapshots - 1 {
                        return Err(Error::DimensionMismatch {
                            what: "explicit minority sets",
                            expected: self.snapshots - 1,
                            found: sets.len(),
                        });
                    }
                    let mut used = vec![false; self.n];
                    for (s, set) in sets.iter().enumerate() {
                        for &i in set {
                            if i >= self.n {
                                return invalid_arg(format!("minority node {i} out of range at step {s}"));
                            }
                            if used[i] {
                                return invalid_arg(format!(
                                    "node {i} is minority twice (step {s}); nodes cannot be reused"
                                ));
                            }
                            used[i] = true;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ground truth of a generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Truth {
    Fixed(Membership),
    /// One membership per snapshot.
    Changing(Vec<Membership>),
}

impl Truth {
    /// Membership at snapshot `t` (0-based).
    pub fn at(&self, t: usize) -> &Membership {
        match self {
            Truth::Fixed(g) => g,
            Truth::Changing(gs) => &gs[t],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub seq: GraphSequence,
    pub truth: Truth,
    pub mask: MajorityMask,
}

/// Samples each pair `i < j` independently: the edge is present when the
/// pair's uniform draw falls below `prob(i, j)`.
fn sample_pairs<F>(n: usize, seed: u64, t: usize, prob: F) -> Adjacency
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Edges, t as u64, i as u64);
            ((i + 1)..n)
                .map(|j| rng.random::<f64>() < prob(i, j))
                .collect()
        })
        .collect();
    let mut a = Adjacency::empty(n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &e) in row.iter().enumerate() {
            if e {
                a.set_edge(i, i + 1 + off, true);
            }
        }
    }
    a
}

fn check_block(name: &str, w: &BlockMatrix, g: &Membership) -> Result<()> {
    if w.k() != g.k() {
        return Err(Error::DimensionMismatch {
            what: "block matrix vs membership k",
            expected: g.k(),
            found: w.k(),
        });
    }
    if w.has_undetermined() {
        return Err(Error::InvalidDynamics(format!("{name} has undetermined entries")));
    }
    Ok(())
}

fn check_prev(prev: &Adjacency, g: &Membership) -> Result<()> {
    if prev.n() != g.n() {
        return Err(Error::DimensionMismatch {
            what: "adjacency vs membership size",
            expected: g.n(),
            found: prev.n(),
        });
    }
    Ok(())
}

/// One SBM snapshot: `A_ij ~ Bernoulli(W[g_i, g_j])`.
pub fn sample_sbm(g: &Membership, w: &BlockMatrix, seed: u64, t: usize) -> Result<Adjacency> {
    check_block("W", w, g)?;
    Ok(sample_pairs(g.n(), seed, t, |i, j| w.get(g.index(i), g.index(j))))
}

/// One transition with explicit `f = P(0 -> 1)` and `h = P(1 -> 1)` per block pair.
pub fn step_general(
    prev: &Adjacency,
    g: &Membership,
    f: &BlockMatrix,
    h: &BlockMatrix,
    seed: u64,
    t: usize,
) -> Result<Adjacency> {
    check_prev(prev, g)?;
    check_block("f", f, g)?;
    check_block("h", h, g)?;
    Ok(sample_pairs(g.n(), seed, t, |i, j| {
        let (a, b) = (g.index(i), g.index(j));
        if prev.has_edge(i, j) {
            h.get(a, b)
        } else {
            f.get(a, b)
        }
    }))
}

/// Type-I transition: an absent edge appears with probability `mu W`, a
/// present edge survives with probability `1 - mu`.
///
/// Any `W, mu` in `[0, 1]` give valid transition probabilities, so the
/// stationarity constraint `mu (1 + W) <= 1` is not required here.
pub fn step_type1(
    prev: &Adjacency,
    g: &Membership,
    w: &BlockMatrix,
    mu: &BlockMatrix,
    seed: u64,
    t: usize,
) -> Result<Adjacency> {
    check_block("W", w, g)?;
    check_block("mu", mu, g)?;
    let f = w.zip_map(mu, |w, m| m * w)?;
    let h = mu.map(|m| 1.0 - m)?;
    step_general(prev, g, &f, &h, seed, t)
}

/// Type-II transition: each pair keeps its previous value with probability
/// `xi`, otherwise it is redrawn from `W^t`.
pub fn step_type2(
    prev: &Adjacency,
    g: &Membership,
    wt: &BlockMatrix,
    xi: f64,
    seed: u64,
    t: usize,
) -> Result<Adjacency> {
    crate::graph::check_unit("xi", xi)?;
    check_block("W", wt, g)?;
    let f = wt.map(|w| (1.0 - xi) * w)?;
    let h = wt.map(|w| xi + (1.0 - xi) * w)?;
    step_general(prev, g, &f, &h, seed, t)
}

/// Draws node labels from the configured prior.
pub fn gen_membership(cfg: &GenConfig) -> Result<Membership> {
    cfg.validate()?;
    let cdf = cfg.prior_cdf()?;
    let mut rng = stream(cfg.seed, Domain::Membership, 0, 0);
    let labels = (0..cfg.n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().position(|&c| u < c).unwrap_or(cfg.k - 1)
        })
        .collect();
    Membership::from_indices(labels, cfg.k)
}

/// Draws the initial membership from the prior and the first snapshot from `W^1`.
pub fn gen_initial(cfg: &GenConfig) -> Result<(Membership, Adjacency)> {
    cfg.validate()?;
    let g = gen_membership(cfg)?;
    let a1 = sample_sbm(&g, cfg.dynamics.initial(), cfg.seed, 0)?;
    Ok((g, a1))
}

/// Picks the minority set for transition `step` and moves each of its nodes
/// to a uniformly random different community.
fn switch_minorities(
    cfg: &GenConfig,
    schedule: &MinoritySchedule,
    step: usize,
    g: &Membership,
    ever_minority: &mut [bool],
) -> Result<(Membership, Vec<usize>)> {
    let mut chosen = match schedule {
        MinoritySchedule::Explicit(sets) => sets[step].clone(),
        MinoritySchedule::Fraction { fraction, start } => {
            if step < *start {
                Vec::new()
            } else {
                let eligible: Vec<usize> = (0..cfg.n).filter(|&i| !ever_minority[i]).collect();
                let count = (fraction * eligible.len() as f64).round() as usize;
                let mut rng = stream(cfg.seed, Domain::MinoritySelect, step as u64, 0);
                sample(&mut rng, eligible.len(), count)
                    .into_iter()
                    .map(|p| eligible[p])
                    .collect()
            }
        }
    };
    chosen.sort_unstable();
    let mut labels = g.indices().to_vec();
    let mut rng = stream(cfg.seed, Domain::Relabel, step as u64, 0);
    for &i in &chosen {
        ever_minority[i] = true;
        let shift = rng.random_range(1..cfg.k);
        labels[i] = (labels[i] + shift) % cfg.k;
    }
    Ok((Membership::from_indices(labels, cfg.k)?, chosen))
}

/// Generates a full sequence with its ground truth and majority mask.
///
/// Links always evolve with the transition probabilities of the configured
/// dynamics evaluated at the endpoints' current communities. With no
/// minorities the changing mode therefore reproduces the fixed mode exactly.
pub fn gen_sequence(cfg: &GenConfig) -> Result<Generated> {
    let (g0, a1) = gen_initial(cfg)?;
    let steps = cfg.snapshots - 1;
    let mut mask = MajorityMask::all_majority(steps, cfg.n);
    let mut snapshots = Vec::with_capacity(cfg.snapshots);
    snapshots.push(a1);
    let mut memberships = vec![g0];
    let mut ever_minority = vec![false; cfg.n];

    for step in 0..steps {
        let current = memberships.last().expect("non-empty");
        let next = match &cfg.community {
            CommunityModel::Fixed => current.clone(),
            CommunityModel::Changing { minorities } => {
                let (next, chosen) = switch_minorities(cfg, minorities, step, current, &mut ever_minority)?;
                for i in chosen {
                    mask.set(step, i, false);
                }
                next
            }
        };
        let prev = snapshots.last().expect("non-empty");
        let dyn_ = &cfg.dynamics;
        let a = sample_pairs(cfg.n, cfg.seed, step + 1, |i, j| {
            let (f, h) = dyn_.transition(step, next.index(i), next.index(j));
            if prev.has_edge(i, j) {
                h
            } else {
                f
            }
        });
        snapshots.push(a);
        memberships.push(next);
    }

    let truth = match cfg.community {
        CommunityModel::Fixed => Truth::Fixed(memberships.swap_remove(0)),
        CommunityModel::Changing { .. } => Truth::Changing(memberships),
    };
    Ok(Generated {
        seq: GraphSequence::new(snapshots)?,
        truth,
        mask,
    })
}

/// `count` block matrices with entries drawn independently and uniformly
/// between the matching entries of `lo` and `hi`.
pub fn gen_block_schedule(lo: &BlockMatrix, hi: &BlockMatrix, count: usize, seed: u64) -> Result<Vec<BlockMatrix>> {
    if lo.k() != hi.k() {
        return Err(Error::DimensionMismatch {
            what: "schedule bounds dimension",
            expected: lo.k(),
            found: hi.k(),
        });
    }
    if lo.entries().iter().zip(hi.entries()).any(|(a, b)| !(a <= b)) {
        return invalid_arg("lower bound exceeds upper bound");
    }
    (0..count)
        .map(|t| {
            let mut rng = stream(seed, Domain::Schedule, t as u64, 0);
            BlockMatrix::from_fn(lo.k(), |r, s| {
                let u: f64 = rng.random();
                lo.get(r, s) + u * (hi.get(r, s) - lo.get(r, s))
            })
        })
        .collect()
}

/// `T` noisy copies of `g_star`: each node independently keeps its label with
/// probability `1 - eps`, otherwise takes one of the other `k - 1` labels uniformly.
pub fn gen_noisy_memberships(
    g_star: &Membership,
    eps: f64,
    snapshots: usize,
    seed: u64,
) -> Result<Vec<Membership>> {
    if !(0.0..1.0).contains(&eps) {
        return invalid_arg(format!("eps={eps} not in [0,1)"));
    }
    let k = g_star.k();
    (0..snapshots)
        .map(|t| {
            let mut rng = stream(seed, Domain::Noise, t as u64, 0);
            let labels = g_star
                .indices()
                .iter()
                .map(|&l| {
                    let flip = rng.random::<f64>() < eps;
                    let shift = rng.random_range(1..k);
                    if flip {
                        (l + shift) % k
                    } else {
                        l
                    }
                })
                .collect();
            Membership::from_indices(labels, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_sequence;

    fn bm(k: usize, diag: f64, off: f64) -> BlockMatrix {
        BlockMatrix::planted(k, diag, off).unwrap()
    }

    fn halves(n: usize) -> Membership {
        Membership::from_indices((0..n).map(|i| (i >= n / 2) as usize).collect(), 2).unwrap()
    }

    /// Observed edges and pair count within community 0 and across 0/1.
    fn block_counts(a: &Adjacency, g: &Membership) -> [(f64, f64); 2] {
        let mut c = [(0.0, 0.0); 2];
        for i in 0..a.n() {
            for j in (i + 1)..a.n() {
                let slot = match (g.index(i), g.index(j)) {
                    (0, 0) => 0,
                    (x, y) if x != y => 1,
                    _ => continue,
                };
                c[slot].0 += a.get(i, j) as f64;
                c[slot].1 += 1.0;
            }
        }
        c
    }

    fn within_3_sigma(count: f64, pairs: f64, p: f64) -> bool {
        (count / pairs - p).abs() <= 3.0 * (p * (1.0 - p) / pairs).sqrt()
    }

    #[test]
    fn extreme_probabilities() {
        let g = halves(12);
        assert_eq!(sample_sbm(&g, &bm(2, 1.0, 1.0), 1, 0).unwrap(), Adjacency::complete(12));
        assert_eq!(sample_sbm(&g, &bm(2, 0.0, 0.0), 1, 0).unwrap(), Adjacency::empty(12));
    }

    #[test]
    fn initial_density_within_three_sigma() {
        let cfg = GenConfig::fixed(
            500,
            1,
            DynamicsParams::type2(bm(2, 0.3, 0.2), 0.0).unwrap(),
            17,
        );
        let (g, a) = gen_initial(&cfg).unwrap();
        let [(win, wp), (cross, cp)] = block_counts(&a, &g);
        assert!(within_3_sigma(win, wp, 0.3));
        assert!(within_3_sigma(cross, cp, 0.2));
    }

    #[test]
    fn type1_deterministic_limits() {
        let g = halves(20);
        let prev = sample_sbm(&g, &bm(2, 0.5, 0.5), 3, 0).unwrap();
        let frozen = step_type1(&prev, &g, &bm(2, 0.3, 0.3), &bm(2, 0.0, 0.0), 3, 1).unwrap();
        assert_eq!(frozen, prev);
        let flipped = step_type1(&prev, &g, &bm(2, 1.0, 1.0), &bm(2, 1.0, 1.0), 3, 1).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    assert_ne!(flipped.get(i, j), prev.get(i, j));
                }
            }
        }
    }

    #[test]
    fn type1_long_run_density() {
        let w = bm(2, 0.3, 0.3);
        let cfg = GenConfig::fixed(
            300,
            60,
            DynamicsParams::type1(w, bm(2, 0.6, 0.6)).unwrap(),
            5,
        );
        let out = gen_sequence(&cfg).unwrap();
        let last = out.seq.snapshot(59);
        let pairs = (300 * 299 / 2) as f64;
        assert!(within_3_sigma(last.edge_count() as f64, pairs, 0.3 / 1.3));
    }

    #[test]
    fn type2_limits_and_marginal() {
        let g = halves(200);
        let w = bm(2, 0.3, 0.2);
        let prev = sample_sbm(&g, &w, 9, 0).unwrap();
        assert_eq!(step_type2(&prev, &g, &w, 1.0, 9, 1).unwrap(), prev);
        let fresh = step_type2(&prev, &g, &w, 0.0, 9, 1).unwrap();
        assert_eq!(fresh, sample_pairs(200, 9, 1, |i, j| w.get(g.index(i), g.index(j))));
        let mut a = prev;
        for t in 1..6 {
            a = step_type2(&a, &g, &w, 0.5, 9, t).unwrap();
            let [(win, wp), (cross, cp)] = block_counts(&a, &g);
            assert!(within_3_sigma(win, wp, 0.3), "t={t}");
            assert!(within_3_sigma(cross, cp, 0.2), "t={t}");
        }
        assert!(step_type2(&a, &g, &w, 1.5, 9, 7).is_err());
    }

    #[test]
    fn fixed_single_snapshot() {
        let cfg = GenConfig::fixed(30, 1, DynamicsParams::type2(bm(2, 0.5, 0.1), 0.3).unwrap(), 2);
        let out = gen_sequence(&cfg).unwrap();
        assert_eq!(out.seq.len(), 1);
        assert_eq!(out.mask.steps(), 0);
        let (g, a1) = gen_initial(&cfg).unwrap();
        assert_eq!(out.truth, Truth::Fixed(g));
        assert_eq!(out.seq.snapshot(0), &a1);
    }

    #[test]
    fn changing_without_minorities_matches_fixed() {
        let dynamics = DynamicsParams::type2(bm(2, 0.5, 0.2), 0.2).unwrap();
        let fixed = gen_sequence(&GenConfig::fixed(80, 5, dynamics.clone(), 4)).unwrap();
        let changing = gen_sequence(&GenConfig::changing(
            80,
            5,
            dynamics,
            MinoritySchedule::Fraction { fraction: 0.0, start: 0 },
            4,
        ))
        .unwrap();
        assert!(changing.mask.is_all_majority());
        assert_eq!(changing.seq, fixed.seq);
        let Truth::Changing(gs) = &changing.truth else { panic!() };
        assert!(gs.iter().all(|g| g == fixed.truth.at(0)));
    }

    #[test]
    fn experiment_c_instance() {
        let w = BlockMatrix::from_fn(2, |r, s| 0.2 + if r == s { 0.3 } else { 0.0 }).unwrap();
        let cfg = GenConfig::changing(
            500,
            6,
            DynamicsParams::type2(w, 0.2).unwrap(),
            MinoritySchedule::Fraction { fraction: 0.1, start: 2 },
            8,
        );
        let out = gen_sequence(&cfg).unwrap();
        assert!(validate_sequence(out.seq.snapshots()).is_ok());
        assert!(out.mask.minorities(0).is_empty());
        assert_eq!(out.mask.minorities(2).len(), 50);
        assert_eq!(out.mask.minorities(3).len(), 45);
        let Truth::Changing(gs) = &out.truth else { panic!() };
        for s in 0..5 {
            let minority = out.mask.minorities(s);
            for i in 0..500 {
                assert_eq!(gs[s].index(i) != gs[s + 1].index(i), minority.contains(&i));
            }
        }
        let later: Vec<usize> = out.mask.minorities(3);
        assert!(later.iter().all(|i| !out.mask.minorities(2).contains(i)));
    }

    #[test]
    fn minority_fraction_bounds() {
        let dynamics = DynamicsParams::type2(bm(2, 0.5, 0.2), 0.2).unwrap();
        let cfg = GenConfig::changing(
            10,
            3,
            dynamics.clone(),
            MinoritySchedule::Fraction { fraction: 1.0, start: 0 },
            1,
        );
        assert!(gen_sequence(&cfg).is_err());
        let reuse = GenConfig::changing(10, 3, dynamics, MinoritySchedule::Explicit(vec![vec![1], vec![1]]), 1);
        assert!(gen_sequence(&reuse).is_err());
    }

    #[test]
    fn generation_is_reproducible_across_thread_counts() {
        let cfg = GenConfig::fixed(
            120,
            4,
            DynamicsParams::type1(bm(3, 0.4, 0.1), bm(3, 0.5, 0.5)).unwrap(),
            99,
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| gen_sequence(&cfg).unwrap().seq)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn noisy_memberships() {
        let g = Membership::from_indices((0..100).map(|i| i % 4).collect(), 4).unwrap();
        assert!(gen_noisy_memberships(&g, 0.0, 3, 1).unwrap().iter().all(|h| h == &g));
        let noisy = gen_noisy_memberships(&g, 0.2, 10, 1).unwrap();
        let flips: usize = noisy
            .iter()
            .map(|h| (0..100).filter(|&i| h.index(i) != g.index(i)).count())
            .sum();
        assert!(within_3_sigma(flips as f64, 1000.0, 0.2));
        assert!(gen_noisy_memberships(&g, 1.0, 3, 1).is_err());
    }

    #[test]
    fn noise_at_three_quarters_is_uniform() {
        let g = Membership::from_indices(vec![0; 4000], 4).unwrap();
        let noisy = gen_noisy_memberships(&g, 0.75, 1, 3).unwrap();
        for c in noisy[0].block_sizes() {
            assert!(within_3_sigma(c as f64, 4000.0, 0.25));
        }
    }
}
