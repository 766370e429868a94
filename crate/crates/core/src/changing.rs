//! Inference when some nodes switch community.
//!
//! Nodes flagged as minority in a [`MajorityMask`] break the link dynamics
//! of the fixed-community model. [`remove_minorities`] simply drops them.
//! [`recover_with_minorities`] instead looks one step ahead: at the first
//! step where nodes switch, majority and minority nodes each still form a
//! block model, and the densities of links between the two sets reveal which
//! minority community corresponds to which majority community.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{invalid_arg, Error, Result};
use crate::estimate::{fit_type2, marginal_estimate};
use crate::graph::{check_unit, Adjacency, BlockMatrix, GraphSequence, MajorityMask, Membership, PARAM_TOL};
use crate::pipeline::{infer_memberships, UnifyMethod};
use crate::recover::{cm_recover, RecoverOpts};

/// Two-parameter block matrix `W = alpha k wbar I + (1 - alpha) wbar 11'`.
///
/// `wbar` is the mean entry and `alpha` interpolates between a purely random
/// graph (0) and one with links only inside communities (1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssortativeParams {
    pub alpha: f64,
    pub wbar: f64,
    pub k: usize,
}

impl AssortativeParams {
    pub fn new(alpha: f64, wbar: f64, k: usize) -> Result<Self> {
        check_unit("alpha", alpha)?;
        check_unit("wbar", wbar)?;
        if k < 2 {
            return invalid_arg(format!("k={k} must be at least 2"));
        }
        if wbar * (1.0 + alpha * (k as f64 - 1.0)) > 1.0 + PARAM_TOL {
            return Err(Error::InvalidBlockMatrix(format!(
                "alpha={alpha}, wbar={wbar}, k={k} give a diagonal above 1"
            )));
        }
        Ok(AssortativeParams { alpha, wbar, k })
    }

    pub fn diagonal(&self) -> f64 {
        self.alpha * self.k as f64 * self.wbar + (1.0 - self.alpha) * self.wbar
    }

    pub fn off_diagonal(&self) -> f64 {
        (1.0 - self.alpha) * self.wbar
    }

    pub fn block_matrix(&self) -> BlockMatrix {
        BlockMatrix::planted(self.k, self.diagonal().min(1.0), self.off_diagonal())
            .expect("validated parameters")
    }
}

/// Least-squares fit of the assortative family: `wbar` is the mean entry and
/// `alpha` the diagonal/off-diagonal gap divided by `k wbar`, clipped to
/// `[0, 1]`. Undetermined (`NaN`) entries are skipped.
pub fn fit_assortative(w: &BlockMatrix) -> Result<AssortativeParams> {
    let k = w.k();
    if k < 2 {
        return invalid_arg("k must be at least 2");
    }
    let (mut diag, mut off) = (Vec::new(), Vec::new());
    for r in 0..k {
        for s in 0..k {
            let v = w.get(r, s);
            if v.is_finite() {
                if r == s { diag.push(v) } else { off.push(v) }
            }
        }
    }
    if diag.is_empty() || off.is_empty() {
        return invalid_arg("block matrix has no determined diagonal or off-diagonal entries");
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (md, mo) = (mean(&diag), mean(&off));
    let kf = k as f64;
    let wbar = (md * kf + mo * (kf * kf - kf)) / (kf * kf);
    if wbar == 0.0 {
        log::warn!("all block densities are zero; assortativity set to 0");
        return AssortativeParams::new(0.0, 0.0, k);
    }
    let alpha = ((md - mo) / (kf * wbar)).clamp(0.0, 1.0);
    AssortativeParams::new(alpha, wbar.min(1.0 / (1.0 + alpha * (kf - 1.0))), k)
}

/// Drops every node that is minority at some transition.
/// Returns the induced sequence and the original indices of the survivors.
pub fn remove_minorities(seq: &GraphSequence, mask: &MajorityMask) -> Result<(GraphSequence, Vec<usize>)> {
    if mask.n() != seq.n() || mask.steps() != seq.len().saturating_sub(1) {
        return Err(Error::DimensionMismatch {
            what: "mask shape (steps x n)",
            expected: seq.len().saturating_sub(1) * seq.n(),
            found: mask.steps() * mask.n(),
        });
    }
    let keep = mask.stable_nodes(mask.steps());
    if keep.is_empty() {
        return invalid_arg("every node is minority at some step");
    }
    Ok((seq.induced(&keep)?, keep))
}

fn check_pair(w_prev: &BlockMatrix, w_cur: &BlockMatrix, a: usize, b: usize) -> Result<usize> {
    let k = w_cur.k();
    if w_prev.k() != k {
        return Err(Error::DimensionMismatch {
            what: "block matrix dimension",
            expected: k,
            found: w_prev.k(),
        });
    }
    if k < 2 || a >= k || b >= k {
        return invalid_arg(format!("communities ({a},{b}) out of range for k={k}"));
    }
    Ok(k)
}

/// Edge probability at `t` between a node now in community `a` and one now
/// in community `b` (0-based), given whether each kept its community
/// (`mi`, `mj`). A node that switched is equally likely to have come from
/// any of the other `k - 1` communities.
pub fn marginal_changing(
    w_prev: &BlockMatrix,
    w_cur: &BlockMatrix,
    xi: f64,
    mi: bool,
    mj: bool,
    a: usize,
    b: usize,
) -> Result<f64> {
    let k = check_pair(w_prev, w_cur, a, b)?;
    check_unit("xi", xi)?;
    let from = |keep: bool, now: usize| -> Vec<usize> {
        if keep { vec![now] } else { (0..k).filter(|&c| c != now).collect() }
    };
    let (ri, rj) = (from(mi, a), from(mj, b));
    let mut prev = 0.0;
    for &c in &ri {
        for &d in &rj {
            prev += w_prev.get(c, d);
        }
    }
    prev /= (ri.len() * rj.len()) as f64;
    Ok(xi * prev + (1.0 - xi) * w_cur.get(a, b))
}

/// [`marginal_changing`] for a constant assortative `W`, in closed form.
pub fn marginal_assortative(p: &AssortativeParams, xi: f64, mi: bool, mj: bool, a: usize, b: usize) -> Result<f64> {
    check_unit("xi", xi)?;
    let k = p.k;
    if a >= k || b >= k {
        return invalid_arg(format!("communities ({a},{b}) out of range for k={k}"));
    }
    let kf = k as f64;
    let w_ab = if a == b { p.diagonal() } else { p.off_diagonal() };
    let (mi, mj) = (mi as u8 as f64, mj as u8 as f64);
    let (ni, nj) = (1.0 - mi, 1.0 - mj);
    let inner = mi * mj * w_ab
        + (mi * nj + ni * mj) / (kf - 1.0) * (kf * p.wbar - w_ab)
        + ni * nj / ((kf - 1.0) * (kf - 1.0)) * ((kf * kf - 2.0 * kf) * p.wbar + w_ab);
    Ok(xi * inner + (1.0 - xi) * w_ab)
}

/// Which majority community a minority community should be matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// The one it shares the most links with.
    Highest,
    /// The one it shares the fewest links with.
    Lowest,
    /// Neither rule holds for every community pair.
    Undecidable,
}

/// Sign test for matching minority to majority communities.
///
/// For a majority node in `a`, compares the link probability to a minority
/// node now in `a` with one now in `b`:
/// `(1 - xi)(W_aa - W_ab) + xi/(k - 1) (Wprev_ab - Wprev_aa)`.
pub fn alignment_condition(w_prev: &BlockMatrix, w_cur: &BlockMatrix, xi: f64) -> Result<Alignment> {
    let k = check_pair(w_prev, w_cur, 0, 0)?;
    check_unit("xi", xi)?;
    let scale = xi / (k as f64 - 1.0);
    let (mut pos, mut neg) = (true, true);
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let s = (1.0 - xi) * (w_cur.get(a, a) - w_cur.get(a, b)) + scale * (w_prev.get(a, b) - w_prev.get(a, a));
            pos &= s > 0.0;
            neg &= s < 0.0;
        }
    }
    Ok(match (pos, neg) {
        (true, _) => Alignment::Highest,
        (_, true) => Alignment::Lowest,
        _ => Alignment::Undecidable,
    })
}

/// Matching rule used by [`recover_with_minorities`] for an assortative
/// model with persistence `xi`.
pub fn assortative_rule(xi: f64, k: usize) -> Alignment {
    if 1.0 - xi - xi / (k as f64 - 1.0) > 0.0 {
        Alignment::Highest
    } else {
        Alignment::Lowest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangingOpts {
    pub recover: RecoverOpts,
    pub unify: UnifyMethod,
    pub grid_step: f64,
}

impl Default for ChangingOpts {
    fn default() -> Self {
        ChangingOpts {
            recover: RecoverOpts::default(),
            unify: UnifyMethod::default(),
            grid_step: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChangingOutcome {
    /// Original indices of the nodes covered below; nodes that switched
    /// before the last transition are excluded.
    pub nodes: Vec<usize>,
    /// Memberships before the last transition.
    pub previous: Membership,
    /// Memberships after it, minorities included.
    pub current: Membership,
    /// Positions (within `nodes`) of the nodes that switched at the last transition.
    pub minorities: Vec<usize>,
    pub xi: f64,
    pub w: BlockMatrix,
    pub assortative: AssortativeParams,
    pub rule: Alignment,
    /// Whether minority communities were matched at all.
    pub aligned: bool,
    /// Fewer minority nodes than communities.
    pub low_confidence: bool,
}

/// Recovers memberships at the last snapshot of `seq`, including nodes that
/// switched community at the last transition.
///
/// The history (all snapshots but the last) gives the previous memberships
/// and type-II parameters. In the last snapshot, minority nodes are
/// clustered among themselves and each resulting community is matched to a
/// majority community by cross-link density, one-to-one; the direction
/// (highest or lowest density) follows [`assortative_rule`]. With
/// `refine_passes > 0` the minority labels are then refined by likelihood
/// using both their mutual links and their links to majority nodes.
pub fn recover_with_minorities(
    seq: &GraphSequence,
    mask: &MajorityMask,
    k: usize,
    opts: &ChangingOpts,
) -> Result<ChangingOutcome> {
    let t = seq.len();
    if t < 2 {
        return invalid_arg("need at least two snapshots");
    }
    if mask.n() != seq.n() || mask.steps() < t - 1 {
        return Err(Error::DimensionMismatch {
            what: "mask steps",
            expected: t - 1,
            found: mask.steps(),
        });
    }
    let step = t - 2;
    let nodes = mask.stable_nodes(step);
    if nodes.len() < k {
        return invalid_arg(format!("only {} nodes never switched before the last step", nodes.len()));
    }
    let history = seq.window(0..t - 1)?.induced(&nodes)?;
    let previous = infer_memberships(&history, k, opts.unify, &opts.recover)?;
    let (w, xi) = if history.len() >= 2 {
        fit_type2(&history, &previous, opts.grid_step)?
    } else {
        (marginal_estimate(history.snapshot(0), &previous)?, 0.0)
    };
    let assortative = fit_assortative(&w)?;
    let rule = assortative_rule(xi, k);

    let minorities: Vec<usize> = (0..nodes.len())
        .filter(|&p| !mask.is_majority(step, nodes[p]))
        .collect();
    let mut outcome = ChangingOutcome {
        current: previous.clone(),
        previous,
        nodes,
        minorities,
        xi,
        w,
        assortative,
        rule,
        aligned: false,
        low_confidence: false,
    };
    if outcome.minorities.is_empty() {
        return Ok(outcome);
    }
    let a_t = seq.snapshot(t - 1).induced(&outcome.nodes);
    let minority = &outcome.minorities;
    let m = minority.len();
    outcome.low_confidence = m < k;
    let local: Vec<usize> = if m >= k && m >= 2 {
        cm_recover(&a_t.induced(minority), k, &opts.recover)?.indices().to_vec()
    } else {
        (0..m).collect()
    };
    let groups = local.iter().max().map_or(0, |&x| x + 1);

    let mut is_minority = vec![false; a_t.n()];
    for &p in minority {
        is_minority[p] = true;
    }
    let prev_idx = outcome.previous.indices();
    let mut edges = DMatrix::<f64>::zeros(groups, k);
    let mut group_size = vec![0.0; groups];
    let mut maj_size = vec![0.0; k];
    for (p, &maj) in is_minority.iter().enumerate() {
        if !maj {
            maj_size[prev_idx[p]] += 1.0;
        }
    }
    for (q, &p) in minority.iter().enumerate() {
        group_size[local[q]] += 1.0;
        for (j, &e) in a_t.row(p).iter().enumerate() {
            if e == 1 && !is_minority[j] {
                edges[(local[q], prev_idx[j])] += 1.0;
            }
        }
    }
    let sign = if rule == Alignment::Lowest { -1.0 } else { 1.0 };
    let weights = DMatrix::from_fn(groups, k, |g, c| {
        let pairs = group_size[g] * maj_size[c];
        sign * if pairs > 0.0 { edges[(g, c)] / pairs } else { 0.0 }
    });
    let matched = max_weight_assignment(&weights);
    let mut labels = prev_idx.to_vec();
    for (q, &p) in minority.iter().enumerate() {
        labels[p] = matched[local[q]];
    }
    if opts.recover.refine_passes > 0 {
        labels = refine_minorities(&a_t, &is_minority, labels, k, opts.recover.refine_passes);
    }
    outcome.current = Membership::from_indices(labels, k)?;
    outcome.aligned = true;
    Ok(outcome)
}

/// Likelihood reassignment of minority nodes with majority labels held
/// fixed. Minority-majority and minority-minority links get separate block
/// densities.
fn refine_minorities(a: &Adjacency, is_minority: &[bool], mut labels: Vec<usize>, k: usize, passes: usize) -> Vec<usize> {
    let n = a.n();
    let minority: Vec<usize> = (0..n).filter(|&i| is_minority[i]).collect();
    let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
    for _ in 0..passes {
        let (mut maj_size, mut min_size) = (vec![0.0f64; k], vec![0.0f64; k]);
        for i in 0..n {
            if is_minority[i] { min_size[labels[i]] += 1.0 } else { maj_size[labels[i]] += 1.0 }
        }
        // Per minority node: link counts to majority and to minority communities.
        let counts: Vec<(Vec<f64>, Vec<f64>)> = minority
            .par_iter()
            .map(|&i| {
                let (mut to_maj, mut to_min) = (vec![0.0; k], vec![0.0; k]);
                for (j, &e) in a.row(i).iter().enumerate() {
                    if e == 1 {
                        if is_minority[j] { to_min[labels[j]] += 1.0 } else { to_maj[labels[j]] += 1.0 }
                    }
                }
                (to_maj, to_min)
            })
            .collect();
        let (mut cross, mut within) = (vec![0.0; k * k], vec![0.0; k * k]);
        for (q, &i) in minority.iter().enumerate() {
            for c in 0..k {
                cross[labels[i] * k + c] += counts[q].0[c];
                within[labels[i] * k + c] += counts[q].1[c];
            }
        }
        let cross: Vec<f64> = (0..k * k)
            .map(|p| {
                let pairs = min_size[p / k] * maj_size[p % k];
                if pairs > 0.0 { clamp(cross[p] / pairs) } else { 0.5 }
            })
            .collect();
        let within: Vec<f64> = (0..k * k)
            .map(|p| {
                let (l, m) = (p / k, p % k);
                let pairs = if l == m { min_size[l] * (min_size[l] - 1.0) } else { min_size[l] * min_size[m] };
                if pairs > 0.0 { clamp(within[p] / pairs) } else { 0.5 }
            })
            .collect();
        let next: Vec<usize> = minority
            .par_iter()
            .enumerate()
            .map(|(q, &i)| {
                let own = labels[i];
                let (to_maj, to_min) = &counts[q];
                if to_maj.iter().chain(to_min).all(|&c| c == 0.0) {
                    return own;
                }
                let score = |l: usize| -> f64 {
                    let mut s = 0.0;
                    for c in 0..k {
                        let p = cross[l * k + c];
                        s += to_maj[c] * p.ln() + (maj_size[c] - to_maj[c]) * (1.0 - p).ln();
                        let p = within[l * k + c];
                        let others = min_size[c] - (c == own) as u8 as f64;
                        s += to_min[c] * p.ln() + (others - to_min[c]) * (1.0 - p).ln();
                    }
                    s
                };
                let mut best = (own, score(own));
                for l in 0..k {
                    let v = score(l);
                    if v > best.1 {
                        best = (l, v);
                    }
                }
                best.0
            })
            .collect();
        let mut changed = false;
        for (q, &i) in minority.iter().enumerate() {
            changed |= labels[i] != next[q];
            labels[i] = next[q];
        }
        if !changed {
            break;
        }
    }
    labels
}
