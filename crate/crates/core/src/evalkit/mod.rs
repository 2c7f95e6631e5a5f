//! Evaluation harnesses: recognisability ranking, feasibility trials,
//! iterative-improvement scoring and pairwise vote tallies.

mod feasibility;
mod improvement;
mod rank;
mod votes;

use std::path::Path;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::render::RenderError;
use crate::sim::SimError;

pub use feasibility::{aggregate_feasibility, feasibility_trials, trial_outcome, FeasibilityStats, TrialOutcome};
pub use improvement::{
    compare_designs, designs_from_log, improvement_scores, rule_comparator, BackendSemantic, DesignSummary, NoSemantic,
    Outcome, SemanticJudge, VerdictFile, write_improvement_csv,
};
pub use rank::{
    build_rank_trials, builtin_pool, compute_rank_metrics, group_rank_metrics, parse_pool, run_rank_eval, run_rank_trial,
    RankEval, RankMetrics, RankTrial, BUILTIN_POOL,
};
pub use votes::{format_rate, load_votes, parse_votes, tally_votes, TallyReport, VoteRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label pool has {have} labels, {need} needed")]
    PoolTooSmall { have: usize, need: usize },
    #[error("label {0:?} is not in the pool")]
    LabelNotInPool(String),
    #[error("no trials to aggregate")]
    NoTrials,
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Percentage with at most two decimals and no trailing zeros: `97.78`, `80`.
pub fn format_pct(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Writes rows through the csv crate, header first.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), EvalError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
