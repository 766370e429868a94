use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphseq_core::estimate::{fit_type1_with, fit_type2, fit_mle_general, SearchOpts, Type1Method, Type1Opts};
use graphseq_core::generator::{gen_sequence, GenConfig, Truth};
use graphseq_core::metrics::{auc, misclassification, nmi};
use graphseq_core::pipeline::{unify_estimates, UnifyMethod};
use graphseq_core::recover::{recover_each, spectral_mean, RecoverOpts};
use graphseq_core::{DynamicsParams, ModelTag};
use graphseq_eval::error::{EvalError, Result};
use graphseq_eval::experiment::{run_experiment, ExperimentConfig, ExperimentTag};
use graphseq_eval::io::{
    create_dir, load_json, load_membership, load_memberships, load_snapshots, save_json, save_mask, save_membership,
    save_memberships, save_snapshots,
};
use graphseq_eval::predict_links;
use serde_json::json;

#[derive(Parser)]
#[command(name = "graphseq", version, about = "Markovian graph-sequence block models")]
struct Cli {
    /// Seed for all random draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo runs (experiments only).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a sequence from a JSON generator config.
    Generate {
        config: PathBuf,
    },
    /// Recover communities in every snapshot separately.
    Recover {
        snapshots: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        recover: RecoverArgs,
    },
    /// Merge per-snapshot estimates into one membership.
    Unify {
        /// Per-snapshot estimates (`t,node,label`), or snapshots for spectral-mean.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Cm)]
        method: Method,
        #[arg(long)]
        k: Option<usize>,
        /// Co-clustering threshold for `threshold`.
        #[arg(long, default_value_t = 1)]
        c: usize,
        /// Pruning level for `cm`.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[command(flatten)]
        recover: RecoverArgs,
    },
    /// Fit dynamics parameters given memberships.
    Estimate {
        snapshots: PathBuf,
        membership: PathBuf,
        #[arg(long, value_enum, default_value_t = Model::Type1)]
        model: Model,
        #[arg(long, value_enum, default_value_t = Fit::Mle)]
        fit: Fit,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
    },
    /// Score every pair for the snapshot after `--from`.
    Predict {
        snapshots: PathBuf,
        membership: PathBuf,
        params: PathBuf,
        /// 0-based snapshot used as the previous state; defaults to the last.
        #[arg(long)]
        from: Option<usize>,
    },
    /// Compare an estimated membership with the truth.
    Eval {
        estimate: PathBuf,
        truth: PathBuf,
    },
    /// Run a Monte Carlo experiment and write its report.
    Experiment {
        #[arg(value_enum)]
        tag: ExperimentTag,
        /// JSON config replacing the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Snapshot file for experiment G.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RecoverArgs {
    /// Likelihood refinement passes after spectral clustering.
    #[arg(long, default_value_t = 0)]
    refine: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

impl RecoverArgs {
    fn opts(&self, seed: u64) -> RecoverOpts {
        RecoverOpts {
            seed,
            restarts: self.restarts,
            refine_passes: self.refine,
            ..RecoverOpts::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cm,
    Lp,
    Threshold,
    SpectralMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Type1,
    Type2,
    General,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fit {
    Mle,
    Moments,
    MomentsJoint,
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.cmd {
        Cmd::Generate { config } => {
            let mut cfg: GenConfig = load_json(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = out_path(cli, "generated");
            create_dir(&dir)?;
            let gen = gen_sequence(&cfg)?;
            save_snapshots(&gen.seq, &dir.join("snapshots.csv"))?;
            match &gen.truth {
                Truth::Fixed(g) => save_membership(g, &dir.join("truth.csv"))?,
                Truth::Changing(gs) => save_memberships(gs, &dir.join("truth.csv"))?,
            }
            save_mask(&gen.mask, &dir.join("mask.csv"))?;
            save_json(&cfg, &dir.join("config.json"))?;
            log::info!("wrote {}", dir.display());
        }
        Cmd::Recover { snapshots, k, recover } => {
            let seq = load_snapshots(snapshots)?;
            let estimates = recover_each(&seq, *k, &recover.opts(seed))?;
            save_memberships(&estimates, &out_path(cli, "estimates.csv"))?;
        }
        Cmd::Unify { input, method, k, c, eps, recover } => {
            let opts = recover.opts(seed);
            let g = match method {
                Method::SpectralMean => {
                    let k = k.ok_or_else(|| EvalError::Config("spectral-mean needs --k".into()))?;
                    spectral_mean(&load_snapshots(input)?, k, &opts)?
                }
                m => {
                    let estimates = load_memberships(input, *k)?;
                    let method = match m {
                        Method::Cm => UnifyMethod::Cm { eps: *eps },
                        Method::Lp => UnifyMethod::Lp,
                        _ => UnifyMethod::Threshold { c: *c },
                    };
                    unify_estimates(&estimates, method, &opts)?
                }
            };
            save_membership(&g, &out_path(cli, "membership.csv"))?;
        }
        Cmd::Estimate { snapshots, membership, model, fit, grid_step } => {
            let seq = load_snapshots(snapshots)?;
            let g = load_membership(membership, None)?;
            let type1 = |method| -> Result<DynamicsParams> {
                let (w, mu) = fit_type1_with(&seq, &g, &Type1Opts { grid_step: *grid_step, method })?;
                Ok(DynamicsParams::TypeI { w, mu })
            };
            let params = match (model, fit) {
                (Model::Type1, Fit::Moments) => type1(Type1Method::PerStep)?,
                (Model::Type1, Fit::MomentsJoint) => type1(Type1Method::Joint)?,
                (Model::Type2, Fit::Moments | Fit::MomentsJoint) => {
                    let (w, xi) = fit_type2(&seq, &g, *grid_step)?;
                    DynamicsParams::TypeII { w, xi }
                }
                (m, _) => {
                    let tag = match m {
                        Model::Type1 => ModelTag::TypeI,
                        Model::Type2 => ModelTag::TypeII,
                        Model::General => ModelTag::General,
                    };
                    fit_mle_general(&seq, &g, tag, &SearchOpts::default())?
                }
            };
            save_json(&params, &out_path(cli, "params.json"))?;
        }
        Cmd::Predict { snapshots, membership, params, from } => {
            let seq = load_snapshots(snapshots)?;
            let g = load_membership(membership, None)?;
            let params: DynamicsParams = load_json(params)?;
            let from = from.unwrap_or(seq.len() - 1);
            if from >= seq.len() {
                return Err(EvalError::Config(format!("--from {from} but only {} snapshots", seq.len())));
            }
            let scores = predict_links(seq.snapshot(from), &g, &params)?;
            let path = out_path(cli, "scores.csv");
            write_scores(&scores, &path)?;
            if from + 1 < seq.len() {
                let (s, labels) = scores.pair_scores(seq.snapshot(from + 1));
                print_json(&json!({ "t": from + 1, "auc": auc(&s, &labels)? }));
            }
        }
        Cmd::Eval { estimate, truth } => {
            let a = load_membership(estimate, None)?;
            let b = load_membership(truth, None)?;
            let b = graphseq_core::Membership::from_indices(b.indices().to_vec(), a.k().max(b.k()))?;
            let a = graphseq_core::Membership::from_indices(a.indices().to_vec(), b.k())?;
            let v = nmi(&a, &b)?;
            print_json(&json!({
                "nmi": v,
                "community_error": 1.0 - v,
                "misclassification": misclassification(&a, &b)?,
            }));
        }
        Cmd::Experiment { tag, config, dataset } => {
            let mut cfg = match config {
                Some(p) => load_json::<ExperimentConfig>(p)?,
                None => ExperimentConfig::preset(*tag, dataset.clone())?,
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(r) = cli.runs {
                cfg.runs = r;
            }
            let report = run_experiment(&cfg)?;
            let path = out_path(cli, &format!("experiment_{}", tag_name(*tag)));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            report.save(&path)?;
            let summary: serde_json::Map<_, _> = report
                .summary
                .iter()
                .map(|(k, s)| (k.clone(), json!({ "mean": s.mean, "std": s.std })))
                .collect();
            print_json(&json!({ "report": path.with_extension("json"), "summary": summary }));
        }
    }
    Ok(())
}

fn tag_name(tag: ExperimentTag) -> String {
    tag.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn write_scores(scores: &graphseq_eval::ScoreMatrix, path: &Path) -> Result<()> {
    let mut text = String::from("u,v,score\n");
    for i in 0..scores.n() {
        for j in (i + 1)..scores.n() {
            text.push_str(&format!("{i},{j},{}\n", scores.get(i, j)));
        }
    }
    std::fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{}", json!({ "error": "config", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
