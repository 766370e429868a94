//! Parameter estimation once community memberships are known.
//!
//! Two routes are provided. The moment route compares per-snapshot block
//! densities with the model's marginal edge probabilities
//! ([`fit_type1`], [`fit_type2`]). The likelihood route maximizes the
//! conditional likelihood of the whole sequence ([`fit_mle_general`]); it
//! only needs the block-level transition counts in [`TransitionCounts`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{
    check_unit, BlockMatrix, DynamicsParams, GraphSequence, Membership, ModelTag, Transition,
};

/// Probabilities inside fitting objectives are clamped to this range.
pub const PROB_CLAMP: f64 = 1e-9;

/// Edge and transition counts per unordered block pair.
///
/// All tables are `k x k`, symmetric, and count unordered node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    k: usize,
    sizes: Vec<usize>,
    /// Node pairs per block pair.
    pairs: Vec<f64>,
    /// Edges per snapshot.
    edges: Vec<Vec<f64>>,
    /// `[n00, n01, n10, n11]` per transition; `nab` counts pairs going from `a` to `b`.
    steps: Vec<Vec<[f64; 4]>>,
}

impl TransitionCounts {
    pub fn from_sequence(seq: &GraphSequence, g: &Membership) -> Result<Self> {
        if g.n() != seq.n() {
            return Err(Error::DimensionMismatch {
                what: "membership vs sequence size",
                expected: seq.n(),
                found: g.n(),
            });
        }
        let (n, k) = (seq.n(), g.k());
        let sizes = g.block_sizes();
        let mut pairs = vec![0.0; k * k];
        for r in 0..k {
            for s in 0..k {
                pairs[r * k + s] = if r == s {
                    (sizes[r] * sizes[r].saturating_sub(1) / 2) as f64
                } else {
                    (sizes[r] * sizes[s]) as f64
                };
            }
        }
        let idx = |i: usize, j: usize| {
            let (a, b) = (g.index(i), g.index(j));
            (a * k + b, b * k + a)
        };
        let edges: Vec<Vec<f64>> = seq
            .snapshots()
            .par_iter()
            .map(|a| {
                let mut e = vec![0.0; k * k];
                for (i, j) in a.edges() {
                    let (p, q) = idx(i, j);
                    e[p] += 1.0;
                    if p != q {
                        e[q] += 1.0;
                    }
                }
                e
            })
            .collect();
        let steps: Vec<Vec<[f64; 4]>> = (1..seq.len())
            .into_par_iter()
            .map(|t| {
                let (prev, cur) = (seq.snapshot(t - 1), seq.snapshot(t));
                let mut c = vec![[0.0; 4]; k * k];
                for i in 0..n {
                    for j in (i + 1)..n {
                        let code = 2 * prev.get(i, j) as usize + cur.get(i, j) as usize;
                        let (p, q) = idx(i, j);
                        c[p][code] += 1.0;
                        if p != q {
                            c[q][code] += 1.0;
                        }
                    }
                }
                c
            })
            .collect();
        Ok(TransitionCounts {
            k,
            sizes,
            pairs,
            edges,
            steps,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of snapshots.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self, r: usize, s: usize) -> f64 {
        self.pairs[r * self.k + s]
    }

    /// Edges in block pair `(r, s)` of snapshot `t` (0-based).
    pub fn edges(&self, t: usize, r: usize, s: usize) -> f64 {
        self.edges[t][r * self.k + s]
    }

    /// `[n00, n01, n10, n11]` for the transition from snapshot `step` to `step + 1`.
    pub fn step(&self, step: usize, r: usize, s: usize) -> [f64; 4] {
        self.steps[step][r * self.k + s]
    }

    /// Transition counts summed over all steps.
    pub fn total(&self, r: usize, s: usize) -> [f64; 4] {
        self.steps.iter().fold([0.0; 4], |mut acc, c| {
            for (a, b) in acc.iter_mut().zip(c[r * self.k + s]) {
                *a += b;
            }
            acc
        })
    }

    /// Block densities of snapshot `t`; `NaN` where a block pair has no node pairs.
    pub fn density(&self, t: usize) -> Result<BlockMatrix> {
        let k = self.k;
        BlockMatrix::new(
            k,
            (0..k * k)
                .map(|p| {
                    let pairs = self.pairs[p];
                    if pairs > 0.0 {
                        self.edges[t][p] / pairs
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
        )
    }

    fn check_nonempty(&self) -> Result<()> {
        match self.sizes.iter().position(|&s| s == 0) {
            Some(r) => Err(Error::EmptyCommunity(r + 1)),
            None => Ok(()),
        }
    }
}

/// Block densities of one snapshot.
///
/// Off-diagonal entries divide the edge count by `|r||s|`. Diagonal entries
/// sum `A_ij` over ordered pairs inside the block and divide by
/// `|r|(|r| - 1)`; a block with a single node gives `NaN`.
pub fn marginal_estimate(a: &crate::graph::Adjacency, g: &Membership) -> Result<BlockMatrix> {
    let seq = GraphSequence::new(vec![a.clone()])?;
    let counts = TransitionCounts::from_sequence(&seq, g)?;
    counts.check_nonempty()?;
    counts.density(0)
}

/// Per-snapshot block densities of a whole sequence.
pub fn marginal_estimates(seq: &GraphSequence, g: &Membership) -> Result<Vec<BlockMatrix>> {
    let counts = TransitionCounts::from_sequence(seq, g)?;
    counts.check_nonempty()?;
    (0..counts.len()).map(|t| counts.density(t)).collect()
}

fn check_time(t: usize) -> Result<()> {
    if t == 0 {
        return invalid_arg("time index is 1-based");
    }
    Ok(())
}

/// Marginal edge probability at snapshot `t` (1-based) under constant
/// transition probabilities: `W^t = h W^{t-1} + f (1 - W^{t-1})`, `W^1 = w1`.
pub fn marginal_recursion_general(
    f: &BlockMatrix,
    h: &BlockMatrix,
    w1: &BlockMatrix,
    t: usize,
) -> Result<BlockMatrix> {
    check_time(t)?;
    let mut w = w1.clone();
    for _ in 1..t {
        w = BlockMatrix::from_fn(w.k(), |r, s| {
            let prev = w.get(r, s);
            h.get(r, s) * prev + f.get(r, s) * (1.0 - prev)
        })?;
    }
    Ok(w)
}

/// As [`marginal_recursion_general`] with per-step transition probabilities;
/// `steps[m]` drives the move from snapshot `m + 1` to `m + 2`.
pub fn marginal_recursion_schedule(
    w1: &BlockMatrix,
    steps: &[Transition],
    t: usize,
) -> Result<BlockMatrix> {
    check_time(t)?;
    if t - 1 > steps.len() {
        return invalid_arg(format!("{} transitions cannot reach t={t}", steps.len()));
    }
    let mut w = w1.clone();
    for tr in &steps[..t - 1] {
        w = BlockMatrix::from_fn(w.k(), |r, s| {
            let prev = w.get(r, s);
            tr.h.get(r, s) * prev + tr.f.get(r, s) * (1.0 - prev)
        })?;
    }
    Ok(w)
}

/// Unrolled form of [`marginal_recursion_schedule`]: with `d = h - f`,
/// `W^t = (prod_{m} d^m) W^1 + sum_m f^m prod_{m' > m} d^{m'}`.
pub fn marginal_product_form(w1: &BlockMatrix, steps: &[Transition], t: usize) -> Result<BlockMatrix> {
    check_time(t)?;
    if t - 1 > steps.len() {
        return invalid_arg(format!("{} transitions cannot reach t={t}", steps.len()));
    }
    let used = &steps[..t - 1];
    BlockMatrix::from_fn(w1.k(), |r, s| {
        let d = |tr: &Transition| tr.h.get(r, s) - tr.f.get(r, s);
        let carry: f64 = used.iter().map(d).product();
        let inflow: f64 = used
            .iter()
            .enumerate()
            .map(|(m, tr)| tr.f.get(r, s) * used[m + 1..].iter().map(d).product::<f64>())
            .sum();
        carry * w1.get(r, s) + inflow
    })
}

fn type1_marginal(w: f64, mu: f64, t: usize) -> f64 {
    let d = 1.0 - mu - mu * w;
    (d.powi(t as i32 - 1) * w * w + w) / (1.0 + w)
}

/// Type-I marginal in closed form: `((1 - mu - mu W)^{t-1} W^2 + W) / (1 + W)`.
pub fn marginal_recursion_type1(w: &BlockMatrix, mu: &BlockMatrix, t: usize) -> Result<BlockMatrix> {
    check_time(t)?;
    DynamicsParams::type1(w.clone(), mu.clone())?;
    BlockMatrix::from_fn(w.k(), |r, s| type1_marginal(w.get(r, s), mu.get(r, s), t))
}

/// Type-II marginal: `W` at every `t`.
pub fn marginal_recursion_type2(w: &BlockMatrix, xi: f64, t: usize) -> Result<BlockMatrix> {
    check_time(t)?;
    check_unit("xi", xi)?;
    Ok(w.clone())
}

/// Evenly spaced points from 0 to 1 inclusive.
pub fn unit_grid(step: f64) -> Result<Vec<f64>> {
    grid(0.0, 1.0, step)
}

fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || step > 1.0 {
        return invalid_arg(format!("grid step {step} not in (0,1]"));
    }
    let count = ((hi - lo) / step).round().max(0.0) as usize;
    Ok((0..=count)
        .map(|i| if count == 0 { lo } else { lo + (hi - lo) * i as f64 / count as f64 })
        .collect())
}

fn feasible_type1(w: f64, mu: f64) -> bool {
    mu * (1.0 + w) <= 1.0 + 1e-12
}

/// How [`fit_type1_with`] combines the snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Type1Method {
    /// Fit `(W, mu)` separately to each snapshot's densities, then average.
    #[default]
    PerStep,
    /// One least-squares fit over all snapshots at once.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type1Opts {
    pub grid_step: f64,
    pub method: Type1Method,
}

impl Default for Type1Opts {
    fn default() -> Self {
        Type1Opts {
            grid_step: 0.01,
            method: Type1Method::PerStep,
        }
    }
}

/// Grid fit of type-I `(W, mu)` to per-snapshot block densities, averaged
/// over snapshots.
///
/// A single snapshot's density is one equation in two unknowns, so each
/// per-snapshot problem has a curve of minimizers and the grid picks the
/// first one it meets. [`Type1Method::Joint`] uses all snapshots in one
/// objective and is identifiable for `T >= 2`.
pub fn fit_type1(seq: &GraphSequence, g: &Membership, grid_step: f64) -> Result<(BlockMatrix, BlockMatrix)> {
    fit_type1_with(
        seq,
        g,
        &Type1Opts {
            grid_step,
            method: Type1Method::PerStep,
        },
    )
}

pub fn fit_type1_with(seq: &GraphSequence, g: &Membership, opts: &Type1Opts) -> Result<(BlockMatrix, BlockMatrix)> {
    if seq.len() < 2 {
        return invalid_arg("type-I fitting needs at least two snapshots");
    }
    let densities = marginal_estimates(seq, g)?;
    let values = unit_grid(opts.grid_step)?;
    let k = g.k();
    let fitted: Vec<(f64, f64)> = (0..k * k)
        .into_par_iter()
        .map(|p| {
            let (r, s) = (p / k, p % k);
            if s < r {
                return (0.0, 0.0);
            }
            let obs: Vec<f64> = densities.iter().map(|d| d.get(r, s)).collect();
            if obs[0].is_nan() {
                return (f64::NAN, f64::NAN);
            }
            fit_type1_block(&obs, &values, opts.method)
        })
        .collect();
    let pick = |r: usize, s: usize| fitted[r.min(s) * k + r.max(s)];
    Ok((
        BlockMatrix::from_fn(k, |r, s| pick(r, s).0)?,
        BlockMatrix::from_fn(k, |r, s| pick(r, s).1)?,
    ))
}

/// Type-I fit of one block pair to its density series `obs` (snapshot 1 first).
pub fn fit_type1_block(obs: &[f64], grid: &[f64], method: Type1Method) -> (f64, f64) {
    let candidates: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&w| grid.iter().map(move |&mu| (w, mu)))
        .filter(|&(w, mu)| feasible_type1(w, mu))
        .collect();
    let argmin = |cost: &dyn Fn(f64, f64) -> f64| -> (f64, f64) {
        let mut best = (candidates[0], f64::INFINITY);
        for &(w, mu) in &candidates {
            let c = cost(w, mu);
            if c < best.1 {
                best = ((w, mu), c);
            }
        }
        best.0
    };
    match method {
        Type1Method::Joint => argmin(&|w, mu| {
            obs.iter()
                .enumerate()
                .map(|(t, &o)| (type1_marginal(w, mu, t + 1) - o).powi(2))
                .sum()
        }),
        Type1Method::PerStep => {
            let per_t: Vec<(f64, f64)> = obs
                .iter()
                .enumerate()
                .map(|(t, &o)| argmin(&|w, mu| (type1_marginal(w, mu, t + 1) - o).powi(2)))
                .collect();
            let m = per_t.len() as f64;
            let w = per_t.iter().map(|x| x.0).sum::<f64>() / m;
            let mu = per_t.iter().map(|x| x.1).sum::<f64>() / m;
            // Averaging feasible points can step just outside the
            // feasible set; project back along mu.
            (w, mu.min(1.0 / (1.0 + w)))
        }
    }
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

#[inline]
fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Log-likelihood contribution of transition counts `[n00, n01, n10, n11]`
/// under `f = P(0 -> 1)` and `h = P(1 -> 1)`.
fn transition_ll(c: [f64; 4], f: f64, h: f64) -> f64 {
    xlogy(c[0], 1.0 - f) + xlogy(c[1], f) + xlogy(c[2], 1.0 - h) + xlogy(c[3], h)
}

fn bernoulli_ll(edges: f64, pairs: f64, w: f64) -> f64 {
    xlogy(edges, w) + xlogy(pairs - edges, 1.0 - w)
}

/// Exact log-likelihood of the sequence given memberships and dynamics.
/// Events with probability zero under the parameters give `-inf`.
pub fn loglik_general(seq: &GraphSequence, g: &Membership, dynamics: &DynamicsParams) -> Result<f64> {
    let counts = TransitionCounts::from_sequence(seq, g)?;
    loglik_from_counts(&counts, dynamics, false)
}

/// Log-likelihood from precomputed counts; `clamped` keeps every
/// probability inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn loglik_from_counts(counts: &TransitionCounts, dynamics: &DynamicsParams, clamped: bool) -> Result<f64> {
    let k = counts.k();
    if dynamics.k() != k {
        return Err(Error::DimensionMismatch {
            what: "dynamics block dimension",
            expected: k,
            found: dynamics.k(),
        });
    }
    if counts.len() > dynamics.max_len() {
        return invalid_arg("dynamics cover fewer snapshots than the sequence");
    }
    let prob = |p: f64| if clamped { clamp_p(p) } else { p };
    let mut total = 0.0;
    for r in 0..k {
        for s in r..k {
            if counts.pairs(r, s) == 0.0 {
                continue;
            }
            total += bernoulli_ll(counts.edges(0, r, s), counts.pairs(r, s), prob(dynamics.initial().get(r, s)));
            for step in 0..counts.len() - 1 {
                let (f, h) = dynamics.transition(step, r, s);
                total += transition_ll(counts.step(step, r, s), prob(f), prob(h));
            }
        }
    }
    Ok(total)
}

/// Grid fit of type-II parameters: `W` is the mean of the per-snapshot
/// densities and `xi` maximizes the (clamped) likelihood with that `W`.
pub fn fit_type2(seq: &GraphSequence, g: &Membership, grid_step: f64) -> Result<(BlockMatrix, f64)> {
    if seq.len() < 2 {
        return invalid_arg("type-II fitting needs at least two snapshots");
    }
    let counts = TransitionCounts::from_sequence(seq, g)?;
    counts.check_nonempty()?;
    let k = counts.k();
    let densities: Vec<BlockMatrix> = (0..counts.len()).map(|t| counts.density(t)).collect::<Result<_>>()?;
    let w = BlockMatrix::from_fn(k, |r, s| {
        densities.iter().map(|d| d.get(r, s)).sum::<f64>() / densities.len() as f64
    })?;
    let xi_ll = |xi: f64| -> f64 {
        let mut total = 0.0;
        for r in 0..k {
            for s in r..k {
                if counts.pairs(r, s) == 0.0 {
                    continue;
                }
                let wv = w.get(r, s);
                let (f, h) = ((1.0 - xi) * wv, xi + (1.0 - xi) * wv);
                total += transition_ll(counts.total(r, s), clamp_p(f), clamp_p(h));
            }
        }
        total
    };
    let xi = argmax_1d(&unit_grid(grid_step)?, xi_ll);
    Ok((w, xi))
}

/// First grid point with the largest objective value.
fn argmax_1d(points: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (points[0], f64::NEG_INFINITY);
    for &x in points {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0
}

/// Grid refinement used by [`fit_mle_general`]: a coarse pass over `[0, 1]`
/// followed by one fine pass around the best coarse point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOpts {
    pub coarse: f64,
    pub fine: f64,
    /// Half-width of the fine pass.
    pub radius: f64,
}

impl Default for SearchOpts {
    fn default() -> Self {
        SearchOpts {
            coarse: 0.02,
            fine: 0.002,
            radius: 0.02,
        }
    }
}

impl SearchOpts {
    fn fine_grid(&self, center: f64) -> Result<Vec<f64>> {
        grid((center - self.radius).max(0.0), (center + self.radius).min(1.0), self.fine)
    }

    fn maximize_1d(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let coarse = argmax_1d(&unit_grid(self.coarse)?, &f);
        Ok(argmax_1d(&self.fine_grid(coarse)?, &f))
    }

    fn maximize_2d(&self, feasible: impl Fn(f64, f64) -> bool, f: impl Fn(f64, f64) -> f64) -> Result<(f64, f64)> {
        let search = |xs: &[f64], ys: &[f64]| {
            let mut best = ((xs[0], ys[0]), f64::NEG_INFINITY);
            for &x in xs {
                for &y in ys {
                    if feasible(x, y) {
                        let v = f(x, y);
                        if v > best.1 {
                            best = ((x, y), v);
                        }
                    }
                }
            }
            best.0
        };
        let coarse = unit_grid(self.coarse)?;
        let (x0, y0) = search(&coarse, &coarse);
        Ok(search(&self.fine_grid(x0)?, &self.fine_grid(y0)?))
    }
}

/// Maximum-likelihood parameters of the requested model family.
///
/// The likelihood separates over block pairs, except for the scalar `xi`
/// of the type-II model, which is profiled: for each candidate `xi` every
/// block's `W` is maximized separately. The general model's maximizer is
/// closed form (edge and transition frequencies). Block pairs without node
/// pairs get zero parameters.
pub fn fit_mle_general(
    seq: &GraphSequence,
    g: &Membership,
    model: ModelTag,
    opts: &SearchOpts,
) -> Result<DynamicsParams> {
    let counts = TransitionCounts::from_sequence(seq, g)?;
    fit_mle_counts(&counts, model, opts)
}

pub fn fit_mle_counts(counts: &TransitionCounts, model: ModelTag, opts: &SearchOpts) -> Result<DynamicsParams> {
    let k = counts.k();
    let blocks: Vec<(usize, usize)> = (0..k).flat_map(|r| (r..k).map(move |s| (r, s))).collect();
    let live = |r: usize, s: usize| counts.pairs(r, s) > 0.0;
    let assemble = |vals: &[f64]| -> Result<BlockMatrix> {
        BlockMatrix::from_fn(k, |r, s| {
            let b = blocks.iter().position(|&x| x == (r.min(s), r.max(s))).expect("block");
            vals[b]
        })
    };
    match model {
        ModelTag::TypeI => {
            let fits: Vec<(f64, f64)> = blocks
                .par_iter()
                .map(|&(r, s)| {
                    if !live(r, s) {
                        return Ok((0.0, 0.0));
                    }
                    let (e, pairs, c) = (counts.edges(0, r, s), counts.pairs(r, s), counts.total(r, s));
                    opts.maximize_2d(feasible_type1, |w, mu| {
                        bernoulli_ll(e, pairs, clamp_p(w)) + transition_ll(c, clamp_p(mu * w), clamp_p(1.0 - mu))
                    })
                })
                .collect::<Result<_>>()?;
            let w = assemble(&fits.iter().map(|x| x.0).collect::<Vec<_>>())?;
            let mu = assemble(&fits.iter().map(|x| x.1).collect::<Vec<_>>())?;
            DynamicsParams::type1(w, mu)
        }
        ModelTag::TypeII => {
            let best_w = |xi: f64| -> Result<Vec<(f64, f64)>> {
                blocks
                    .iter()
                    .map(|&(r, s)| {
                        if !live(r, s) {
                            return Ok((0.0, 0.0));
                        }
                        let (e, pairs, c) = (counts.edges(0, r, s), counts.pairs(r, s), counts.total(r, s));
                        let ll = |w: f64| {
                            bernoulli_ll(e, pairs, clamp_p(w))
                                + transition_ll(c, clamp_p((1.0 - xi) * w), clamp_p(xi + (1.0 - xi) * w))
                        };
                        let w = opts.maximize_1d(ll)?;
                        Ok((w, ll(w)))
                    })
                    .collect()
            };
            let profile = |xi: f64| -> f64 {
                best_w(xi)
                    .map(|v| v.iter().map(|x| x.1).sum())
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let coarse = unit_grid(opts.coarse)?;
            let coarse_vals: Vec<f64> = coarse.par_iter().map(|&xi| profile(xi)).collect();
            let xi0 = argmax_1d_values(&coarse, &coarse_vals);
            let fine = opts.fine_grid(xi0)?;
            let fine_vals: Vec<f64> = fine.par_iter().map(|&xi| profile(xi)).collect();
            let xi = argmax_1d_values(&fine, &fine_vals);
            let w = assemble(&best_w(xi)?.iter().map(|x| x.0).collect::<Vec<_>>())?;
            DynamicsParams::type2(w, xi)
        }
        ModelTag::General => {
            let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
            let w1: Vec<f64> = blocks
                .iter()
                .map(|&(r, s)| ratio(counts.edges(0, r, s), counts.pairs(r, s)))
                .collect();
            let steps = (0..counts.len().saturating_sub(1))
                .map(|step| {
                    let c: Vec<[f64; 4]> = blocks.iter().map(|&(r, s)| counts.step(step, r, s)).collect();
                    Ok(Transition {
                        f: assemble(&c.iter().map(|c| ratio(c[1], c[0] + c[1])).collect::<Vec<_>>())?,
                        h: assemble(&c.iter().map(|c| ratio(c[3], c[2] + c[3])).collect::<Vec<_>>())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DynamicsParams::General {
                w1: assemble(&w1)?,
                steps,
            })
        }
    }
}

fn argmax_1d_values(points: &[f64], values: &[f64]) -> f64 {
    let mut best = (points[0], f64::NEG_INFINITY);
    for (&x, &v) in points.iter().zip(values) {
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use proptest::prelude::*;

    fn bm(k: usize, diag: f64, off: f64) -> BlockMatrix {
        BlockMatrix::planted(k, diag, off).unwrap()
    }

    fn g(labels: &[usize], k: usize) -> Membership {
        Membership::new(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn marginal_estimate_examples() {
        let memb = g(&[1, 1, 2, 2], 2);
        let full = marginal_estimate(&Adjacency::complete(4), &memb).unwrap();
        assert!(full.entries().iter().all(|&v| v == 1.0));
        let none = marginal_estimate(&Adjacency::empty(4), &memb).unwrap();
        assert!(none.entries().iter().all(|&v| v == 0.0));
        let a = Adjacency::from_edges(4, &[(0, 1), (0, 2)]).unwrap();
        let w = marginal_estimate(&a, &memb).unwrap();
        assert_eq!(w.entries(), &[1.0, 0.25, 0.25, 0.0]);
    }

    #[test]
    fn marginal_estimate_flags_singletons_and_empties() {
        let w = marginal_estimate(&Adjacency::complete(3), &g(&[1, 1, 2], 2)).unwrap();
        assert!(w.get(1, 1).is_nan());
        assert_eq!(w.get(0, 1), 1.0);
        assert!(matches!(
            marginal_estimate(&Adjacency::complete(3), &g(&[1, 1, 1], 2)),
            Err(Error::EmptyCommunity(2))
        ));
    }

    #[test]
    fn general_recursion_examples() {
        let c = |v| BlockMatrix::constant(2, v).unwrap();
        assert_eq!(marginal_recursion_general(&c(0.1), &c(0.7), &c(0.5), 1).unwrap(), c(0.5));
        let memoryless = marginal_recursion_general(&c(0.3), &c(0.3), &c(0.9), 4).unwrap();
        assert!(memoryless.entries().iter().all(|v| (v - 0.3).abs() < 1e-15));
        let w3 = marginal_recursion_general(&c(0.1), &c(0.7), &c(0.5), 3).unwrap();
        assert!((w3.get(0, 0) - 0.34).abs() < 1e-12);
        assert!(marginal_recursion_general(&c(0.1), &c(0.7), &c(0.5), 0).is_err());
    }

    #[test]
    fn type1_closed_form_examples() {
        let (w, mu) = (bm(2, 0.3, 0.3), bm(2, 0.6, 0.6));
        assert!((marginal_recursion_type1(&w, &mu, 1).unwrap().get(0, 0) - 0.3).abs() < 1e-15);
        let t2 = marginal_recursion_type1(&w, &mu, 2).unwrap().get(0, 0);
        assert!((t2 - (0.22 * 0.09 + 0.3) / 1.3).abs() < 1e-15);
        assert!((t2 - 0.2460).abs() < 5e-5);
        let t200 = marginal_recursion_type1(&w, &mu, 200).unwrap().get(0, 0);
        let stationary = 0.6 * 0.3 / (0.6 * 0.3 + 0.6);
        assert!((t200 - stationary).abs() < 1e-12);
    }

    #[test]
    fn type2_recursion_is_w() {
        let w = bm(3, 0.4, 0.1);
        assert_eq!(marginal_recursion_type2(&w, 0.3, 7).unwrap(), w);
        assert_eq!(marginal_recursion_type2(&w, 1.0, 5).unwrap(), w);
        let xi = 0.35;
        let f = w.map(|v| (1.0 - xi) * v).unwrap();
        let h = w.map(|v| xi + (1.0 - xi) * v).unwrap();
        for t in 1..10 {
            let m = marginal_recursion_general(&f, &h, &w, t).unwrap();
            assert!(m.max_abs_diff(&w) < 1e-14);
        }
    }

    fn seq_of(snaps: Vec<Adjacency>) -> GraphSequence {
        GraphSequence::new(snaps).unwrap()
    }

    #[test]
    fn loglik_single_snapshot_is_sbm() {
        let memb = g(&[1, 1, 2, 2], 2);
        let a = Adjacency::from_edges(4, &[(0, 1), (0, 2), (1, 3)]).unwrap();
        let w = BlockMatrix::from_rows(&[&[0.6, 0.3], &[0.3, 0.2]]).unwrap();
        let dyn_ = DynamicsParams::type2(w.clone(), 0.4).unwrap();
        let ll = loglik_general(&seq_of(vec![a.clone()]), &memb, &dyn_).unwrap();
        let mut expected = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let p = w.get(memb.index(i), memb.index(j));
                expected += if a.has_edge(i, j) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn loglik_single_pair_type2() {
        let memb = g(&[1, 1], 2);
        let seq = seq_of(vec![Adjacency::empty(2), Adjacency::complete(2)]);
        let dyn_ = DynamicsParams::type2(bm(2, 0.5, 0.5), 0.5).unwrap();
        let ll = loglik_general(&seq, &memb, &dyn_).unwrap();
        assert!((ll - (0.5f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        let frozen = DynamicsParams::type2(bm(2, 0.5, 0.5), 1.0).unwrap();
        assert_eq!(loglik_general(&seq, &memb, &frozen).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn fit_type2_on_constant_sequence_gives_xi_one() {
        let a = Adjacency::from_edges(6, &[(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap();
        let seq = seq_of(vec![a.clone(), a.clone(), a]);
        let (_, xi) = fit_type2(&seq, &g(&[1, 1, 1, 2, 2, 2], 2), 0.01).unwrap();
        assert_eq!(xi, 1.0);
    }

    #[test]
    fn fit_type1_noiseless_oracle() {
        let grid = unit_grid(0.01).unwrap();
        for (w, mu) in [(0.3, 0.6), (0.2, 0.4), (0.5, 0.1)] {
            let obs: Vec<f64> = (1..=10).map(|t| type1_marginal(w, mu, t)).collect();
            let (wh, muh) = fit_type1_block(&obs, &grid, Type1Method::Joint);
            assert!((wh - w).abs() <= 0.01 + 1e-12, "{w} {wh}");
            assert!((muh - mu).abs() <= 0.01 + 1e-12, "{mu} {muh}");
        }
    }

    #[test]
    fn fit_requires_two_snapshots() {
        let seq = seq_of(vec![Adjacency::complete(4)]);
        let memb = g(&[1, 1, 2, 2], 2);
        assert!(fit_type1(&seq, &memb, 0.01).is_err());
        assert!(fit_type2(&seq, &memb, 0.01).is_err());
    }

    #[test]
    fn mle_on_empty_sequence() {
        let seq = seq_of(vec![Adjacency::empty(6); 3]);
        let memb = g(&[1, 1, 1, 2, 2, 2], 2);
        for tag in [ModelTag::TypeI, ModelTag::TypeII, ModelTag::General] {
            let fit = fit_mle_general(&seq, &memb, tag, &SearchOpts::default()).unwrap();
            assert!(fit.initial().entries().iter().all(|&v| v == 0.0), "{tag:?}");
        }
    }

    #[test]
    fn general_mle_counts_frequencies() {
        let memb = g(&[1, 1, 2, 2], 2);
        let a1 = Adjacency::from_edges(4, &[(0, 1), (0, 2)]).unwrap();
        let a2 = Adjacency::from_edges(4, &[(0, 1), (1, 3)]).unwrap();
        let fit = fit_mle_general(&seq_of(vec![a1, a2]), &memb, ModelTag::General, &SearchOpts::default()).unwrap();
        let DynamicsParams::General { w1, steps } = fit else { panic!() };
        assert_eq!(w1.get(0, 1), 0.25);
        assert_eq!(steps[0].h.get(0, 0), 1.0);
        assert_eq!(steps[0].h.get(0, 1), 0.0);
        assert_eq!(steps[0].f.get(0, 1), 1.0 / 3.0);
    }

    fn arb_transition(k: usize) -> impl Strategy<Value = Transition> {
        let n = k * (k + 1) / 2;
        (prop::collection::vec(0.0..=1.0f64, n), prop::collection::vec(0.0..=1.0f64, n)).prop_map(move |(f, h)| {
            let build = |v: &[f64]| {
                let mut it = v.iter();
                let mut data = vec![0.0; k * k];
                for r in 0..k {
                    for s in r..k {
                        let x = *it.next().unwrap();
                        data[r * k + s] = x;
                        data[s * k + r] = x;
                    }
                }
                BlockMatrix::new(k, data).unwrap()
            };
            Transition { f: build(&f), h: build(&h) }
        })
    }

    proptest! {
        #[test]
        fn recursion_matches_product_form(
            steps in prop::collection::vec(arb_transition(3), 1..12),
            w1 in prop::collection::vec(0.0..=1.0f64, 6),
        ) {
            let w1 = BlockMatrix::from_fn(3, |r, s| w1[r * (5 - r) / 2 + s]).unwrap();
            for t in 1..=steps.len() + 1 {
                let a = marginal_recursion_schedule(&w1, &steps, t).unwrap();
                let b = marginal_product_form(&w1, &steps, t).unwrap();
                prop_assert!(a.max_abs_diff(&b) <= 1e-12);
                prop_assert!(a.entries().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn type1_closed_form_matches_recursion(w in 0.0..=1.0f64, frac in 0.0..=1.0f64, t in 1usize..30) {
            let mu = frac / (1.0 + w);
            let (wb, mub) = (bm(2, w, w), bm(2, mu, mu));
            let closed = marginal_recursion_type1(&wb, &mub, t).unwrap();
            let f = wb.zip_map(&mub, |w, m| m * w).unwrap();
            let h = mub.map(|m| 1.0 - m).unwrap();
            let rec = marginal_recursion_general(&f, &h, &wb, t).unwrap();
            prop_assert!(closed.max_abs_diff(&rec) <= 1e-12);
        }

        #[test]
        fn loglik_is_relabel_invariant(
            edges in prop::collection::vec((0usize..8, 0usize..8, 0usize..3), 0..30),
            labels in prop::collection::vec(0usize..3, 8),
            perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        ) {
            let mut snaps = vec![Adjacency::empty(8); 3];
            for (u, v, t) in edges {
                if u != v {
                    snaps[t].set_edge(u, v, true);
                }
            }
            let seq = GraphSequence::new(snaps).unwrap();
            let memb = Membership::from_indices(labels, 3).unwrap();
            let w = BlockMatrix::from_rows(&[&[0.5, 0.2, 0.1], &[0.2, 0.4, 0.3], &[0.1, 0.3, 0.6]]).unwrap();
            let mu = BlockMatrix::from_rows(&[&[0.5, 0.6, 0.2], &[0.6, 0.3, 0.4], &[0.2, 0.4, 0.5]]).unwrap();
            let d = DynamicsParams::type1(w.clone(), mu.clone()).unwrap();
            let dp = DynamicsParams::type1(w.permuted(&perm).unwrap(), mu.permuted(&perm).unwrap()).unwrap();
            let a = loglik_general(&seq, &memb, &d).unwrap();
            let b = loglik_general(&seq, &memb.relabeled(&perm).unwrap(), &dp).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
