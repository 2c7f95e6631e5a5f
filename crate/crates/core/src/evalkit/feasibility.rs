use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_pct, write_csv, EvalError};
use crate::matching::match_blocks;
use crate::model::{AssemblyPlan, BlockInventory};
use crate::sim::{execute_plan, placement_correct, ExecutionReport, SimParams};
use crate::validate::WorkspaceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub correct_blocks: usize,
    pub total_blocks: usize,
}

impl TrialOutcome {
    pub fn successful(&self) -> bool {
        self.total_blocks > 0 && self.correct_blocks == self.total_blocks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityStats {
    pub pct_blocks_correct: f64,
    pub pct_assemblies_successful: f64,
    pub trials: usize,
    pub outcomes: Vec<TrialOutcome>,
}

impl FeasibilityStats {
    /// `97.78 / 80` style summary.
    pub fn summary(&self) -> String {
        format!("{} / {}", format_pct(self.pct_blocks_correct), format_pct(self.pct_assemblies_successful))
    }

    pub fn write_csv(rows: &[(String, FeasibilityStats)], path: &Path) -> Result<(), EvalError> {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|(name, s)| {
                vec![
                    name.clone(),
                    s.trials.to_string(),
                    format_pct(s.pct_blocks_correct),
                    format_pct(s.pct_assemblies_successful),
                ]
            })
            .collect();
        write_csv(path, &["design", "trials", "pct_blocks_correct", "pct_assemblies_successful"], &rows)
    }
}

pub fn aggregate_feasibility(outcomes: &[TrialOutcome]) -> Result<FeasibilityStats, EvalError> {
    let total: usize = outcomes.iter().map(|o| o.total_blocks).sum();
    if outcomes.is_empty() || total == 0 {
        return Err(EvalError::NoTrials);
    }
    let correct: usize = outcomes.iter().map(|o| o.correct_blocks).sum();
    let successes = outcomes.iter().filter(|o| o.successful()).count();
    Ok(FeasibilityStats {
        pct_blocks_correct: 100.0 * correct as f64 / total as f64,
        pct_assemblies_successful: 100.0 * successes as f64 / outcomes.len() as f64,
        trials: outcomes.len(),
        outcomes: outcomes.to_vec(),
    })
}

/// Counts blocks whose executed pose matches the planned one.
pub fn trial_outcome(plan: &AssemblyPlan, report: &ExecutionReport) -> TrialOutcome {
    let correct = report
        .per_block
        .iter()
        .filter(|b| {
            let planned = &plan.blocks[b.index];
            placement_correct(&b.nominal, &b.actual, planned.dims, planned.shape)
        })
        .count();
    TrialOutcome { correct_blocks: correct, total_blocks: plan.blocks.len() }
}

/// Executes a qualified plan `trials` times; trial `t` uses seed `seed + t`.
pub fn feasibility_trials(
    plan: &AssemblyPlan,
    inv: &BlockInventory,
    workspace: &WorkspaceConfig,
    params: &SimParams,
    trials: usize,
    seed: u64,
) -> Result<FeasibilityStats, EvalError> {
    if plan.blocks.is_empty() {
        return Err(EvalError::Precondition("plan has no blocks".into()));
    }
    let m = match_blocks(plan, inv);
    if !m.is_complete() {
        return Err(EvalError::Precondition(format!("plan has {} missing blocks", m.missing.len())));
    }
    let outcomes = (0..trials)
        .map(|t| {
            let report = execute_plan(plan, inv, workspace, params, seed.wrapping_add(t as u64))?;
            Ok(trial_outcome(plan, &report))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    aggregate_feasibility(&outcomes)
}
