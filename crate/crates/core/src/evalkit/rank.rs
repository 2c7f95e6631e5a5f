use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_csv, EvalError};
use crate::gateway::{extract_json, ChatMessage, ChatRequest, Gateway, Part, Role};
use crate::prompts::PromptTemplate;

pub const BUILTIN_POOL: &str = include_str!("../../assets/object_pool.txt");

/// One label per line; blank lines and `#` comments are skipped.
pub fn parse_pool(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

pub fn builtin_pool() -> Vec<String> {
    parse_pool(BUILTIN_POOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTrial {
    pub image: String,
    pub correct_label: String,
    pub run: usize,
    pub candidates: Vec<String>,
    pub returned_ranking: Vec<String>,
    /// 1-based; 0 until the trial has been run.
    pub rank_of_correct: usize,
    /// Set when the response was rejected twice and the rank defaulted to N.
    pub flagged: bool,
}

impl RankTrial {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }
}

/// Candidate lists for `runs` queries of one image. Run `r` draws its
/// distractors from its own stream, seeded `seed + r`.
pub fn build_rank_trials(
    image: &str,
    correct_label: &str,
    pool: &[String],
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<RankTrial>, EvalError> {
    if !pool.iter().any(|p| p == correct_label) {
        return Err(EvalError::LabelNotInPool(correct_label.to_string()));
    }
    let mut distinct: Vec<&String> = Vec::new();
    for p in pool {
        if p != correct_label && !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if n == 0 || distinct.len() + 1 < n {
        return Err(EvalError::PoolTooSmall { have: distinct.len() + 1, need: n.max(1) });
    }
    Ok((0..runs)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
            let mut candidates: Vec<String> =
                distinct.choose_multiple(&mut rng, n - 1).map(|s| (*s).clone()).collect();
            candidates.push(correct_label.to_string());
            candidates.shuffle(&mut rng);
            RankTrial {
                image: image.to_string(),
                correct_label: correct_label.to_string(),
                run,
                candidates,
                returned_ranking: Vec::new(),
                rank_of_correct: 0,
                flagged: false,
            }
        })
        .collect())
}

fn parse_ranking(text: &str, candidates: &[String]) -> Result<Vec<String>, String> {
    let v = extract_json(text).map_err(|e| e.to_string())?;
    let ranking: Vec<String> = serde_json::from_value(v).map_err(|e| format!("expected an array of labels: {e}"))?;
    let mut a = ranking.clone();
    let mut b = candidates.to_vec();
    a.sort();
    b.sort();
    if a != b {
        return Err("the ranking must contain every listed object exactly once".into());
    }
    Ok(ranking)
}

/// Sends the image and candidate list; a response that is not a permutation
/// gets one retry, then the trial is flagged with rank N.
pub fn run_rank_trial(
    gw: &Gateway,
    template: &PromptTemplate,
    model_id: &str,
    trial: &RankTrial,
    image_png: &[u8],
    tag: &str,
) -> Result<RankTrial, EvalError> {
    let candidates = serde_json::to_string_pretty(&trial.candidates).expect("labels serialize");
    let vars = [("candidates", candidates.as_str())];
    let mut req = ChatRequest {
        model_id: model_id.to_string(),
        messages: vec![ChatMessage::system(template.system(&vars)), ChatMessage::user(template.user(&vars))],
        temperature: 0.0,
        max_tokens: 1024,
        expect_json: true,
    };
    req.last_user_mut().parts.push(Part::png(image_png));
    let mut out = trial.clone();
    let first = gw.complete(&req, tag)?;
    let ranking = match parse_ranking(&first, &trial.candidates) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{tag}: {e}; retrying");
            let mut retry = req.clone();
            retry.messages.push(ChatMessage { role: Role::Assistant, parts: vec![Part::Text(first)] });
            retry.messages.push(ChatMessage::user(format!(
                "Your previous response was rejected: {e}. Reply with a JSON array of all {} objects.",
                trial.n()
            )));
            let second = gw.complete(&retry, &format!("{tag}/retry"))?;
            parse_ranking(&second, &trial.candidates).ok()
        }
    };
    match ranking {
        Some(r) => {
            out.rank_of_correct = r.iter().position(|c| c == &trial.correct_label).expect("permutation") + 1;
            out.returned_ranking = r;
        }
        None => {
            out.rank_of_correct = trial.n();
            out.flagged = true;
        }
    }
    Ok(out)
}

/// What one ranking evaluation asks for.
#[derive(Debug, Clone)]
pub struct RankEval<'a> {
    pub image: &'a str,
    pub image_png: &'a [u8],
    pub label: &'a str,
    pub pool: &'a [String],
    pub list_sizes: &'a [usize],
    pub runs: usize,
    pub seed: u64,
    pub model_id: &'a str,
}

/// Runs every list size; calls are tagged `rank/<N>/<run>`.
pub fn run_rank_eval(gw: &Gateway, template: &PromptTemplate, eval: &RankEval) -> Result<Vec<RankTrial>, EvalError> {
    let mut out = Vec::new();
    for &n in eval.list_sizes {
        for trial in build_rank_trials(eval.image, eval.label, eval.pool, n, eval.runs, eval.seed)? {
            let tag = format!("rank/{n}/{}", trial.run);
            out.push(run_rank_trial(gw, template, eval.model_id, &trial, eval.image_png, &tag)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub n: usize,
    pub trials: usize,
    pub top1_pct: f64,
    pub avg_rank: f64,
    pub relative_rank_pct: f64,
}

impl RankMetrics {
    pub fn from_ranks(n: usize, ranks: &[usize]) -> Result<Self, EvalError> {
        if ranks.is_empty() || n == 0 {
            return Err(EvalError::NoTrials);
        }
        let trials = ranks.len();
        let top1 = ranks.iter().filter(|&&r| r == 1).count();
        let top1_pct = 100.0 * top1 as f64 / trials as f64;
        let avg_rank = ranks.iter().sum::<usize>() as f64 / trials as f64;
        let relative_rank_pct = 100.0 * avg_rank / n as f64;
        Ok(Self { n, trials, top1_pct, avg_rank, relative_rank_pct })
    }

    pub fn csv_row(&self, method: &str) -> Vec<String> {
        vec![
            self.n.to_string(),
            method.to_string(),
            format!("{:.2}", self.top1_pct),
            format!("{:.2}", self.avg_rank),
            format!("{:.2}", self.relative_rank_pct),
        ]
    }
}

/// Metrics for trials that share one list length.
pub fn compute_rank_metrics(trials: &[RankTrial]) -> Result<RankMetrics, EvalError> {
    let n = trials.first().ok_or(EvalError::NoTrials)?.n();
    if trials.iter().any(|t| t.n() != n) {
        return Err(EvalError::Precondition("trials mix list lengths; use group_rank_metrics".into()));
    }
    if trials.iter().any(|t| t.rank_of_correct == 0) {
        return Err(EvalError::Precondition("trial has not been run".into()));
    }
    let ranks: Vec<usize> = trials.iter().map(|t| t.rank_of_correct).collect();
    RankMetrics::from_ranks(n, &ranks)
}

pub fn group_rank_metrics(trials: &[RankTrial]) -> Result<Vec<RankMetrics>, EvalError> {
    let mut groups: BTreeMap<usize, Vec<RankTrial>> = BTreeMap::new();
    for t in trials {
        groups.entry(t.n()).or_default().push(t.clone());
    }
    groups.values().map(|g| compute_rank_metrics(g)).collect()
}

impl RankMetrics {
    pub fn write_csv(rows: &[(String, RankMetrics)], path: &Path) -> Result<(), EvalError> {
        let rows: Vec<Vec<String>> = rows.iter().map(|(m, r)| r.csv_row(m)).collect();
        write_csv(path, &["N", "method", "top1", "avg", "relative"], &rows)
    }
}
