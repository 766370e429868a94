//! Monte Carlo experiments and their reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use graphseq_core::changing::{recover_with_minorities, ChangingOpts};
use graphseq_core::estimate::{
    fit_mle_general, fit_type1_with, fit_type2, SearchOpts, Type1Method, Type1Opts,
};
use graphseq_core::generator::{
    gen_block_schedule, gen_membership, gen_noisy_memberships, gen_sequence, CommunityModel, GenConfig, Generated,
    MinoritySchedule,
};
use graphseq_core::metrics::{auc, best_label_map, frob_error_aligned, nmi_error, relative_error};
use graphseq_core::pipeline::{unify_estimates, UnifyMethod};
use graphseq_core::recover::{recover_each, spectral_mean, RecoverOpts};
use graphseq_core::rng::{derive_seed, Domain};
use graphseq_core::{BlockMatrix, DynamicsParams, GraphSequence, Membership, ModelTag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Context, EvalError, Result};
use crate::io::{load_snapshots, save_json};
use crate::predict::predict_links;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentTag {
    A,
    B,
    C,
    D,
    E,
    G,
    Custom,
}

/// Entry-wise uniform bounds for block matrices redrawn at every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidW {
    pub lo: BlockMatrix,
    pub hi: BlockMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Data {
    /// Noisy copies of a random ground truth stand in for per-snapshot estimates.
    NoisyLabels { n: usize, k: usize, snapshots: usize, eps: f64 },
    /// Generated sequences. With `iid_w`, the configured dynamics only
    /// supply `mu` or `xi` and `W^t` is redrawn at every snapshot.
    Synthetic {
        gen: GenConfig,
        #[serde(default)]
        iid_w: Option<IidW>,
    },
    /// Snapshots read from disk.
    Dataset { path: PathBuf, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analysis {
    /// Community error of each merge method against the truth, per prefix.
    Unify,
    /// Memberships and parameters fitted on every prefix, or only on the
    /// whole sequence.
    Parameters { all_prefixes: bool },
    /// Staged recovery of nodes that switch community.
    Minorities,
    /// Sliding-window fit and one-step-ahead prediction scored by AUC.
    LinkPrediction { window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    Mle,
    /// Moment matching with per-snapshot averaging.
    Moments,
    /// Moment matching over all snapshots jointly.
    MomentsJoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub tag: ExperimentTag,
    pub data: Data,
    pub analysis: Analysis,
    /// Methods compared by [`Analysis::Unify`]; the others use the first.
    pub unify: Vec<UnifyMethod>,
    pub model: ModelTag,
    #[serde(default)]
    pub fit: FitMethod,
    #[serde(default)]
    pub recover: RecoverOpts,
    #[serde(default = "default_grid")]
    pub grid_step: f64,
    pub runs: usize,
    pub seed: u64,
}

fn default_grid() -> f64 {
    0.01
}

fn planted(k: usize, diag: f64, off: f64) -> BlockMatrix {
    BlockMatrix::planted(k, diag, off).expect("valid preset")
}

fn refined() -> RecoverOpts {
    RecoverOpts {
        refine_passes: 3,
        ..RecoverOpts::default()
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each tag. `G` needs `dataset`.
    pub fn preset(tag: ExperimentTag, dataset: Option<PathBuf>) -> Result<Self> {
        let cm = UnifyMethod::Cm { eps: 0.0 };
        let base = |data, analysis, unify, model| ExperimentConfig {
            tag,
            data,
            analysis,
            unify,
            model,
            fit: FitMethod::Mle,
            recover: RecoverOpts::default(),
            grid_step: 0.01,
            runs: 10,
            seed: 1,
        };
        let dummy = |k| DynamicsParams::type2(planted(k, 0.5, 0.5), 0.0).expect("valid preset");
        let cfg = match tag {
            ExperimentTag::A => base(
                Data::NoisyLabels { n: 100, k: 4, snapshots: 10, eps: 0.2 },
                Analysis::Unify,
                vec![cm, UnifyMethod::Lp, UnifyMethod::Threshold { c: 5 }],
                ModelTag::TypeI,
            ),
            ExperimentTag::B => {
                let ws: Vec<BlockMatrix> = (0..10)
                    .map(|t| if t % 2 == 0 { planted(4, 0.8, 0.2) } else { planted(4, 0.2, 0.8) })
                    .collect();
                let dynamics = DynamicsParams::type2_schedule(&ws, 0.0)?;
                base(
                    Data::Synthetic { gen: GenConfig::fixed(100, 10, dynamics, 0), iid_w: None },
                    Analysis::Unify,
                    vec![UnifyMethod::SpectralMean, cm, UnifyMethod::Lp],
                    ModelTag::General,
                )
            }
            ExperimentTag::C => {
                let dynamics = DynamicsParams::type2(planted(2, 0.5, 0.2), 0.2)?;
                let gen = GenConfig::changing(500, 8, dynamics, MinoritySchedule::Fraction { fraction: 0.1, start: 3 }, 0);
                ExperimentConfig {
                    recover: refined(),
                    ..base(Data::Synthetic { gen, iid_w: None }, Analysis::Minorities, vec![cm], ModelTag::TypeII)
                }
            }
            ExperimentTag::D => {
                let dynamics = DynamicsParams::type1(planted(2, 0.3, 0.2), planted(2, 0.6, 0.4))?;
                ExperimentConfig {
                    recover: refined(),
                    ..base(
                        Data::Synthetic { gen: GenConfig::fixed(500, 20, dynamics, 0), iid_w: None },
                        Analysis::Parameters { all_prefixes: true },
                        vec![cm],
                        ModelTag::TypeI,
                    )
                }
            }
            ExperimentTag::E => {
                let dynamics = DynamicsParams::type1(planted(2, 0.3, 0.2), planted(2, 0.6, 0.4))?;
                let iid_w = IidW { lo: planted(2, 0.25, 0.15), hi: planted(2, 0.35, 0.2) };
                ExperimentConfig {
                    recover: refined(),
                    ..base(
                        Data::Synthetic { gen: GenConfig::fixed(500, 10, dynamics, 0), iid_w: Some(iid_w) },
                        Analysis::Parameters { all_prefixes: true },
                        vec![cm],
                        ModelTag::General,
                    )
                }
            }
            ExperimentTag::G => {
                let path = dataset.ok_or_else(|| EvalError::Config("experiment G needs a dataset".into()))?;
                ExperimentConfig {
                    runs: 1,
                    ..base(Data::Dataset { path, k: 4 }, Analysis::LinkPrediction { window: 4 }, vec![cm], ModelTag::TypeI)
                }
            }
            ExperimentTag::Custom => base(
                Data::Synthetic { gen: GenConfig::fixed(100, 5, dummy(2), 0), iid_w: None },
                Analysis::Unify,
                vec![cm],
                ModelTag::TypeII,
            ),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EvalError::Config(m.into()));
        match (&self.data, self.tag) {
            (Data::Dataset { .. }, ExperimentTag::G | ExperimentTag::Custom) => {}
            (Data::Dataset { .. }, _) => return bad("datasets are only used by experiments G and custom"),
            (_, ExperimentTag::G) => return bad("experiment G needs a dataset"),
            _ => {}
        }
        if self.runs == 0 {
            return bad("at least one run is required");
        }
        if self.unify.is_empty() {
            return bad("at least one merge method is required");
        }
        let needs_truth_seq = matches!(self.analysis, Analysis::Parameters { .. } | Analysis::Minorities);
        match &self.data {
            Data::NoisyLabels { eps, .. } => {
                if !matches!(self.analysis, Analysis::Unify) {
                    return bad("noisy labels only support the unify analysis");
                }
                if self.unify.contains(&UnifyMethod::SpectralMean) {
                    return bad("spectral mean needs graphs");
                }
                if !(0.0..1.0).contains(eps) {
                    return bad("eps must be in [0,1)");
                }
            }
            Data::Dataset { .. } if needs_truth_seq || matches!(self.analysis, Analysis::Unify) => {
                return bad("datasets have no ground truth; use link prediction");
            }
            Data::Synthetic { gen, .. } => {
                gen.validate()?;
                let changing = matches!(gen.community, CommunityModel::Changing { .. });
                if changing != matches!(self.analysis, Analysis::Minorities) {
                    return bad("the minorities analysis needs changing communities and vice versa");
                }
            }
            _ => {}
        }
        if let Analysis::LinkPrediction { window } = self.analysis {
            if window == 0 {
                return bad("window must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, count }
    }
}

/// One metric of one series at snapshot `t` (1-based), aggregated over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub series: String,
    pub t: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub run_seeds: Vec<u64>,
    pub records: Vec<StepRecord>,
    /// `series.metric` at the last snapshot where it was recorded.
    pub summary: BTreeMap<String, Stat>,
    pub wall_time_secs: f64,
}

impl MetricsReport {
    pub fn get(&self, series: &str, t: usize, metric: &str) -> Option<&StepRecord> {
        self.records
            .iter()
            .find(|r| r.series == series && r.t == t && r.metric == metric)
    }

    pub fn last(&self, series: &str, metric: &str) -> Option<Stat> {
        self.summary.get(&format!("{series}.{metric}")).copied()
    }

    /// Mean over all recorded snapshots of one series and metric.
    pub fn mean_over_t(&self, series: &str, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.series == series && r.metric == metric)
            .map(|r| r.mean)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Writes `<stem>.csv` with the records and `<stem>.json` with everything.
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv_path = path.with_extension("csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| EvalError::Config(format!("{}: {e}", csv_path.display())))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| EvalError::Config(format!("{}: {e}", csv_path.display())))?;
        }
        w.flush().map_err(|source| EvalError::Io { path: csv_path.clone(), source })?;
        save_json(self, &path.with_extension("json"))
    }
}

pub fn save_report(report: &MetricsReport, path: &Path) -> Result<()> {
    report.save(path)
}

type Sample = (String, usize, &'static str, f64);

struct Collector(Vec<Sample>);

impl Collector {
    fn push(&mut self, series: &str, t: usize, metric: &'static str, value: f64) {
        self.0.push((series.to_string(), t, metric, value));
    }
}

fn series_name(m: &UnifyMethod) -> String {
    match m {
        UnifyMethod::Cm { .. } => "unify_cm".into(),
        UnifyMethod::Lp => "unify_lp".into(),
        UnifyMethod::Threshold { c } => format!("threshold_c{c}"),
        UnifyMethod::SpectralMean => "spectral_mean".into(),
    }
}

/// Runs every Monte Carlo repetition and aggregates the metrics. Results
/// depend only on the configuration, not on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let start = Instant::now();
    let run_seeds: Vec<u64> = (0..cfg.runs as u64)
        .map(|r| derive_seed(cfg.seed, Domain::Experiment, r))
        .collect();
    let samples: Vec<Vec<Sample>> = run_seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| run_once(cfg, seed).context(|| format!("run {r}")))
        .collect::<Result<_>>()?;

    let mut grouped: BTreeMap<(String, usize, &'static str), Vec<f64>> = BTreeMap::new();
    for run in samples {
        for (series, t, metric, v) in run {
            grouped.entry((series, t, metric)).or_default().push(v);
        }
    }
    let mut summary = BTreeMap::new();
    let records: Vec<StepRecord> = grouped
        .into_iter()
        .map(|((series, t, metric), values)| {
            let s = Stat::of(&values);
            // Keys arrive sorted by t within a series and metric, so the last one wins.
            summary.insert(format!("{series}.{metric}"), s);
            StepRecord {
                series,
                t,
                metric: metric.to_string(),
                mean: s.mean,
                std: s.std,
                runs: s.count,
            }
        })
        .collect();
    let mut records = records;
    records.sort_by(|a, b| (&a.series, &a.metric, a.t).cmp(&(&b.series, &b.metric, b.t)));
    Ok(MetricsReport {
        config: cfg.clone(),
        run_seeds,
        records,
        summary,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// True parameters of a generated sequence, as needed for error metrics.
enum ParamTruth {
    Fixed(DynamicsParams),
    Type1Schedule { ws: Vec<BlockMatrix>, mu: BlockMatrix },
    Type2Schedule { ws: Vec<BlockMatrix>, xi: f64 },
    Unknown,
}

struct Instance {
    gen: Generated,
    truth: ParamTruth,
}

fn generate(gen: &GenConfig, iid_w: &Option<IidW>, seed: u64) -> Result<Instance> {
    let mut gen = gen.clone();
    gen.seed = seed;
    let truth = match (iid_w, &gen.dynamics) {
        (None, DynamicsParams::General { .. }) => ParamTruth::Unknown,
        (None, d) => ParamTruth::Fixed(d.clone()),
        (Some(b), d) => {
            let ws = gen_block_schedule(&b.lo, &b.hi, gen.snapshots, derive_seed(seed, Domain::Schedule, 0))?;
            let (dynamics, truth) = match d {
                DynamicsParams::TypeI { mu, .. } => (
                    DynamicsParams::type1_schedule(&ws, mu)?,
                    ParamTruth::Type1Schedule { ws, mu: mu.clone() },
                ),
                DynamicsParams::TypeII { xi, .. } => (
                    DynamicsParams::type2_schedule(&ws, *xi)?,
                    ParamTruth::Type2Schedule { ws, xi: *xi },
                ),
                DynamicsParams::General { .. } => {
                    return Err(EvalError::Config("redrawn W needs type-I or type-II dynamics".into()))
                }
            };
            gen.dynamics = dynamics;
            truth
        }
    };
    Ok(Instance {
        gen: gen_sequence(&gen)?,
        truth,
    })
}

fn run_once(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let opts = RecoverOpts { seed, ..cfg.recover };
    let mut out = Collector(Vec::new());
    match (&cfg.data, &cfg.analysis) {
        (Data::NoisyLabels { n, k, snapshots, eps }, Analysis::Unify) => {
            let dummy = DynamicsParams::type2(BlockMatrix::constant(*k, 0.5)?, 0.0)?;
            let truth = gen_membership(&GenConfig::fixed(*n, 1, dummy, seed))?;
            let inputs = gen_noisy_memberships(&truth, *eps, *snapshots, seed)?;
            unify_analysis(cfg, &truth, &inputs, None, &opts, &mut out)?;
        }
        (Data::Synthetic { gen, iid_w }, analysis) => {
            let inst = generate(gen, iid_w, seed)?;
            let k = gen.k;
            match analysis {
                Analysis::Unify => {
                    let inputs = recover_each(&inst.gen.seq, k, &opts)?;
                    unify_analysis(cfg, inst.gen.truth.at(0), &inputs, Some(&inst.gen.seq), &opts, &mut out)?;
                }
                Analysis::Parameters { all_prefixes } => parameter_analysis(cfg, &inst, *all_prefixes, &opts, &mut out)?,
                Analysis::Minorities => minority_analysis(cfg, &inst, &opts, &mut out)?,
                Analysis::LinkPrediction { window } => link_analysis(cfg, &inst.gen.seq, k, *window, &opts, &mut out)?,
            }
        }
        (Data::Dataset { path, k }, Analysis::LinkPrediction { window }) => {
            let seq = load_snapshots(path)?;
            link_analysis(cfg, &seq, *k, *window, &opts, &mut out)?;
        }
        _ => return Err(EvalError::Config("unsupported data/analysis combination".into())),
    }
    Ok(out.0)
}

fn unify_analysis(
    cfg: &ExperimentConfig,
    truth: &Membership,
    inputs: &[Membership],
    seq: Option<&GraphSequence>,
    opts: &RecoverOpts,
    out: &mut Collector,
) -> Result<()> {
    for (t, g) in inputs.iter().enumerate() {
        out.push("input", t + 1, "community_error", nmi_error(g, truth)?);
    }
    for t in 1..=inputs.len() {
        for method in &cfg.unify {
            let g = match (method, seq) {
                (UnifyMethod::SpectralMean, Some(seq)) => spectral_mean(&seq.window(0..t)?, truth.k(), opts)?,
                (UnifyMethod::Threshold { c }, _) if *c > t => continue,
                _ => unify_estimates(&inputs[..t], *method, opts)?,
            };
            out.push(&series_name(method), t, "community_error", nmi_error(&g, truth)?);
        }
    }
    Ok(())
}

/// Fitted parameters in a form comparable with the truth.
fn fit(cfg: &ExperimentConfig, seq: &GraphSequence, g: &Membership) -> Result<DynamicsParams> {
    let type1 = |method| -> Result<DynamicsParams> {
        let (w, mu) = fit_type1_with(seq, g, &Type1Opts { grid_step: cfg.grid_step, method })?;
        Ok(DynamicsParams::TypeI { w, mu })
    };
    Ok(match (cfg.model, cfg.fit) {
        (ModelTag::TypeI, FitMethod::Moments) => type1(Type1Method::PerStep)?,
        (ModelTag::TypeI, FitMethod::MomentsJoint) => type1(Type1Method::Joint)?,
        (ModelTag::TypeII, FitMethod::Moments | FitMethod::MomentsJoint) => {
            let (w, xi) = fit_type2(seq, g, cfg.grid_step)?;
            DynamicsParams::TypeII { w, xi }
        }
        (model, _) => fit_mle_general(seq, g, model, &SearchOpts::default())?,
    })
}

fn block_errors(out: &mut Collector, name: &'static str, t: usize, hat: &BlockMatrix, truth: &BlockMatrix, perm: &[usize]) -> Result<()> {
    let (frob, max) = match name {
        "w" => ("frob_error_w", "max_abs_error_w"),
        _ => ("frob_error_mu", "max_abs_error_mu"),
    };
    out.push("fit", t, frob, frob_error_aligned(hat, truth, perm)?);
    out.push("fit", t, max, hat.permuted(perm)?.max_abs_diff(truth));
    Ok(())
}

fn scalar_errors(out: &mut Collector, t: usize, hat: f64, truth: f64) -> Result<()> {
    out.push("fit", t, "abs_error_xi", (hat - truth).abs());
    if truth != 0.0 {
        out.push("fit", t, "rel_error_xi", relative_error(hat, truth)?);
    }
    Ok(())
}

fn parameter_analysis(cfg: &ExperimentConfig, inst: &Instance, all_prefixes: bool, opts: &RecoverOpts, out: &mut Collector) -> Result<()> {
    let truth_g = inst.gen.truth.at(0);
    let k = truth_g.k();
    let method = cfg.unify[0];
    let estimates = recover_each(&inst.gen.seq, k, opts)?;
    let last = inst.gen.seq.len();
    let first = if all_prefixes { 1 } else { last };
    for t in first..=last {
        let g = match method {
            UnifyMethod::SpectralMean => spectral_mean(&inst.gen.seq.window(0..t)?, k, opts)?,
            UnifyMethod::Threshold { c } if c > t => continue,
            m => unify_estimates(&estimates[..t], m, opts)?,
        };
        out.push(&series_name(&method), t, "community_error", nmi_error(&g, truth_g)?);
        if t < 2 {
            continue;
        }
        let prefix = inst.gen.seq.window(0..t)?;
        let fitted = fit(cfg, &prefix, &g).context(|| format!("fitting t={t}"))?;
        let perm = best_label_map(&g, truth_g)?;
        let mean_over = |steps: &[graphseq_core::Transition], f: &dyn Fn(f64, f64) -> f64| {
            BlockMatrix::from_fn(k, |r, s| {
                steps.iter().map(|tr| f(tr.f.get(r, s), tr.h.get(r, s))).sum::<f64>() / steps.len() as f64
            })
        };
        match (&fitted, &inst.truth) {
            (DynamicsParams::TypeI { w, mu }, ParamTruth::Fixed(DynamicsParams::TypeI { w: tw, mu: tmu })) => {
                block_errors(out, "w", t, w, tw, &perm)?;
                block_errors(out, "mu", t, mu, tmu, &perm)?;
            }
            (DynamicsParams::TypeII { w, xi }, ParamTruth::Fixed(DynamicsParams::TypeII { w: tw, xi: txi })) => {
                block_errors(out, "w", t, w, tw, &perm)?;
                scalar_errors(out, t, *xi, *txi)?;
            }
            (DynamicsParams::General { steps, .. }, ParamTruth::Type1Schedule { ws, mu }) => {
                let mu_hat = mean_over(steps, &|_, h| 1.0 - h)?;
                let last = &steps[steps.len() - 1];
                let w_hat = last.f.zip_map(&mu_hat, |f, m| if m > 0.0 { (f / m).min(1.0) } else { 0.0 })?;
                block_errors(out, "w", t, &w_hat, &ws[t - 1], &perm)?;
                block_errors(out, "mu", t, &mu_hat, mu, &perm)?;
            }
            (DynamicsParams::General { steps, .. }, ParamTruth::Type2Schedule { ws, xi }) => {
                let xi_hat = mean_over(steps, &|f, h| h - f)?.mean();
                let last = &steps[steps.len() - 1];
                let w_hat = last.f.map(|f| if xi_hat < 1.0 { (f / (1.0 - xi_hat)).min(1.0) } else { 0.0 })?;
                block_errors(out, "w", t, &w_hat, &ws[t - 1], &perm)?;
                scalar_errors(out, t, xi_hat, *xi)?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn minority_analysis(cfg: &ExperimentConfig, inst: &Instance, opts: &RecoverOpts, out: &mut Collector) -> Result<()> {
    let k = inst.gen.truth.at(0).k();
    let copts = ChangingOpts {
        recover: *opts,
        unify: cfg.unify[0],
        grid_step: cfg.grid_step,
    };
    let true_xi = match &inst.truth {
        ParamTruth::Fixed(DynamicsParams::TypeII { xi, .. }) => Some(*xi),
        _ => None,
    };
    let mask = &inst.gen.mask;
    for step in 0..mask.steps() {
        if mask.minorities(step).is_empty() {
            continue;
        }
        let t = step + 2;
        let prefix = inst.gen.seq.window(0..t)?;
        let res = recover_with_minorities(&prefix, mask, k, &copts).context(|| format!("minorities at t={t}"))?;
        let truth = inst.gen.truth.at(t - 1).restrict(&res.nodes);
        out.push("minorities", t, "count_majority", (res.nodes.len() - res.minorities.len()) as f64);
        out.push("minorities", t, "count_minority", res.minorities.len() as f64);
        out.push("minorities", t, "community_error", nmi_error(&res.current, &truth)?);
        if res.minorities.len() >= 2 {
            let m = |g: &Membership| g.restrict(&res.minorities);
            out.push("minorities", t, "minority_error", nmi_error(&m(&res.current), &m(&truth))?);
        }
        // Fraction of minority nodes whose label agrees with the majority
        // nodes of their true community, which NMI alone cannot see.
        let majority_label: Vec<Option<usize>> = (0..k)
            .map(|c| {
                (0..res.nodes.len())
                    .find(|q| !res.minorities.contains(q) && truth.index(*q) == c)
                    .map(|q| res.current.index(q))
            })
            .collect();
        let agree = res
            .minorities
            .iter()
            .filter(|&&p| majority_label[truth.index(p)] == Some(res.current.index(p)))
            .count();
        out.push("minorities", t, "minority_alignment", agree as f64 / res.minorities.len() as f64);
        if let Some(xi) = true_xi {
            out.push("minorities", t, "abs_error_xi", (res.xi - xi).abs());
        }
    }
    Ok(())
}

fn link_analysis(
    cfg: &ExperimentConfig,
    seq: &GraphSequence,
    k: usize,
    window: usize,
    opts: &RecoverOpts,
    out: &mut Collector,
) -> Result<()> {
    if seq.len() <= window {
        return Err(EvalError::Config(format!(
            "{} snapshots leave nothing to predict with window {window}",
            seq.len()
        )));
    }
    let estimates = recover_each(seq, k, opts)?;
    for target in window..seq.len() {
        let range = target - window..target;
        let past = seq.window(range.clone())?;
        let g = match cfg.unify[0] {
            UnifyMethod::SpectralMean => spectral_mean(&past, k, opts)?,
            m => unify_estimates(&estimates[range], m, opts)?,
        };
        let params = fit(cfg, &past, &g).context(|| format!("fitting window ending at t={target}"))?;
        let scores = predict_links(past.snapshot(window - 1), &g, &params)?;
        let (s, labels) = scores.pair_scores(seq.snapshot(target));
        match auc(&s, &labels) {
            Ok(v) => out.push("prediction", target + 1, "auc", v),
            Err(e) => log::warn!("t={}: AUC skipped: {e}", target + 1),
        }
    }
    Ok(())
}
