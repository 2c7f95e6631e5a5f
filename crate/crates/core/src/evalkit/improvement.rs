use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_csv, EvalError};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, Part};
use crate::orchestrator::{parse_choice, RunLog};
use crate::prompts::PromptTemplate;

const STABLE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AWins,
    BWins,
    Tie,
}

impl Outcome {
    fn flipped(self) -> Self {
        match self {
            Outcome::AWins => Outcome::BWins,
            Outcome::BWins => Outcome::AWins,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

/// What the rule-based comparator looks at for one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub iteration: u32,
    pub missing: usize,
    pub stable_fraction: f64,
}

pub fn designs_from_log(log: &RunLog) -> Vec<DesignSummary> {
    log.iterations
        .iter()
        .map(|r| DesignSummary { iteration: r.iteration, missing: r.matching.missing.len(), stable_fraction: r.stable_fraction })
        .collect()
}

/// Semantic tie-breaker between two designs.
pub trait SemanticJudge {
    fn compare(&mut self, a: &DesignSummary, b: &DesignSummary) -> Result<Outcome, EvalError>;
}

/// No semantic channel: every comparison that reaches it is a tie.
pub struct NoSemantic;

impl SemanticJudge for NoSemantic {
    fn compare(&mut self, _: &DesignSummary, _: &DesignSummary) -> Result<Outcome, EvalError> {
        Ok(Outcome::Tie)
    }
}

/// Human verdicts, CSV `a,b,winner` with winner `a`, `b`, `tie` or an
/// iteration index. Pairs not listed are ties.
#[derive(Debug, Clone, Default)]
pub struct VerdictFile {
    verdicts: BTreeMap<(u32, u32), Outcome>,
}

impl VerdictFile {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut verdicts = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let (Some(a), Some(b), Some(w)) = (row.get(0), row.get(1), row.get(2)) else {
                return Err(EvalError::Precondition(format!("verdict row {:?} needs three fields", row)));
            };
            let bad = || EvalError::Precondition(format!("verdict row {a},{b},{w} is malformed"));
            let a: u32 = a.parse().map_err(|_| bad())?;
            let b: u32 = b.parse().map_err(|_| bad())?;
            let outcome = match w.to_ascii_lowercase().as_str() {
                "a" => Outcome::AWins,
                "b" => Outcome::BWins,
                "tie" => Outcome::Tie,
                n => match n.parse::<u32>() {
                    Ok(i) if i == a => Outcome::AWins,
                    Ok(i) if i == b => Outcome::BWins,
                    _ => return Err(bad()),
                },
            };
            verdicts.insert((a, b), outcome);
        }
        Ok(Self { verdicts })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl SemanticJudge for VerdictFile {
    fn compare(&mut self, a: &DesignSummary, b: &DesignSummary) -> Result<Outcome, EvalError> {
        Ok(match self.verdicts.get(&(a.iteration, b.iteration)) {
            Some(o) => *o,
            None => self.verdicts.get(&(b.iteration, a.iteration)).map_or(Outcome::Tie, |o| o.flipped()),
        })
    }
}

/// Pairwise model call on settled renders; unreadable answers are ties.
pub struct BackendSemantic<'a> {
    pub gateway: &'a Gateway,
    pub template: PromptTemplate,
    pub model_id: String,
    pub target: String,
    /// PNG render per iteration.
    pub images: BTreeMap<u32, Vec<u8>>,
}

impl SemanticJudge for BackendSemantic<'_> {
    fn compare(&mut self, a: &DesignSummary, b: &DesignSummary) -> Result<Outcome, EvalError> {
        let vars = [("target", self.target.as_str())];
        let mut req = ChatRequest {
            model_id: self.model_id.clone(),
            messages: vec![ChatMessage::system(self.template.system(&vars)), ChatMessage::user(self.template.user(&vars))],
            temperature: 0.0,
            max_tokens: 16,
            expect_json: false,
        };
        for i in [a.iteration, b.iteration] {
            let png = self
                .images
                .get(&i)
                .ok_or_else(|| EvalError::Precondition(format!("no render for iteration {i}")))?;
            req.last_user_mut().parts.push(Part::png(png));
        }
        let reply = self.gateway.complete(&req, &format!("compare/{}/{}", a.iteration, b.iteration))?;
        Ok(match parse_choice(&reply) {
            Ok('A') => Outcome::AWins,
            Ok(_) => Outcome::BWins,
            Err(e) => {
                log::warn!("compare {}/{}: {e}; counting a tie", a.iteration, b.iteration);
                Outcome::Tie
            }
        })
    }
}

/// Missing blocks lose; then higher stable fraction; then the semantic channel.
pub fn compare_designs(a: &DesignSummary, b: &DesignSummary, semantic: &mut dyn SemanticJudge) -> Result<Outcome, EvalError> {
    match (a.missing > 0, b.missing > 0) {
        (true, false) => return Ok(Outcome::BWins),
        (false, true) => return Ok(Outcome::AWins),
        _ => {}
    }
    let d = a.stable_fraction - b.stable_fraction;
    if d > STABLE_TIE_TOL {
        return Ok(Outcome::AWins);
    }
    if d < -STABLE_TIE_TOL {
        return Ok(Outcome::BWins);
    }
    semantic.compare(a, b)
}

pub fn rule_comparator<'s>(
    semantic: &'s mut dyn SemanticJudge,
) -> impl FnMut(&DesignSummary, &DesignSummary) -> Result<Outcome, EvalError> + 's {
    move |a, b| compare_designs(a, b, semantic)
}

/// `score(i)` counts earlier iterations that iteration `i` matched or beat.
/// The comparator receives (later, earlier).
pub fn improvement_scores(
    designs: &[DesignSummary],
    mut compare: impl FnMut(&DesignSummary, &DesignSummary) -> Result<Outcome, EvalError>,
) -> Result<Vec<u32>, EvalError> {
    let mut scores = Vec::with_capacity(designs.len());
    for (i, later) in designs.iter().enumerate() {
        let mut s = 0;
        for earlier in &designs[..i] {
            if compare(later, earlier)? != Outcome::BWins {
                s += 1;
            }
        }
        scores.push(s);
    }
    Ok(scores)
}

pub fn write_improvement_csv(designs: &[DesignSummary], scores: &[u32], path: &Path) -> Result<(), EvalError> {
    let rows: Vec<Vec<String>> =
        designs.iter().zip(scores).map(|(d, s)| vec![d.iteration.to_string(), s.to_string()]).collect();
    write_csv(path, &["iteration", "score"], &rows)
}
