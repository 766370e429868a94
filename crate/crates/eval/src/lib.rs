//! File formats, link prediction and Monte Carlo experiments on top of
//! `graphseq-core`.

pub mod error;
pub mod experiment;
pub mod io;
pub mod predict;

pub use error::{EvalError, Result};
pub use experiment::{run_experiment, save_report, ExperimentConfig, ExperimentTag, MetricsReport};
pub use predict::{predict_links, ScoreMatrix};
