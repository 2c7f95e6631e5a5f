//! The design loop: plan, execute, judge, re-plan, then knockout selection.

pub mod bracket;
mod judge;
pub mod stub;
mod tiers;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::gateway::{attach_animation, extract_json, ChatMessage, ChatRequest, Gateway, GatewayError, Part, Role};
use crate::matching::{match_blocks, MatchResult};
use crate::model::{AssemblyPlan, BlockInventory, ModelError};
use crate::prompts::{PromptError, PromptSet, PromptTemplate};
use crate::render::{encode_png, render_plan_settled, render_sequence, CameraSpec, ColorMode, FrameSequence, RenderError};
use crate::sim::{execute_plan, ExecutionReport, FrameRecord, SimParams};
use crate::validate::{validate_plan, WorkspaceConfig};

pub use bracket::{knockout, Bracket, BracketMatch, BracketRound, Decision};
pub use judge::{AvailabilityFinding, JudgeReport, SemanticAssessment, StabilityRisk, Suggestion, SuggestionKind};
pub use tiers::{HighLevelBlock, HighLevelPlan};

pub const INITIAL_INSTRUCTION: &str = "produce an initial minimal design";
pub const REVISE_INSTRUCTION: &str = "revise the design so that it is buildable with the available blocks, stable, and recognisable as the target";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("no qualified design")]
    NoQualifiedDesign,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("iteration {iteration}: {reason}")]
    Aborted { iteration: u32, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub judge: f64,
    pub replan: f64,
    pub order: f64,
    pub position: f64,
    pub selector: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self { judge: 0.4, replan: 0.5, order: 0.5, position: 0.25, selector: 0.0 }
    }
}

impl Temperatures {
    fn all(&self) -> [(&'static str, f64); 5] {
        [
            ("judge", self.judge),
            ("replan", self.replan),
            ("order", self.order),
            ("position", self.position),
            ("selector", self.selector),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target: String,
    pub inventory_path: PathBuf,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default)]
    pub temperatures: Temperatures,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_frames")]
    pub max_frames: usize,
    #[serde(default)]
    pub workspace: WorkspaceConfig,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default = "default_runs_root")]
    pub runs_root: PathBuf,
    #[serde(default)]
    pub run_id: Option<String>,
    /// Free-form backend description, recorded in the config snapshot.
    #[serde(default)]
    pub backend: String,
}

fn default_iterations() -> u32 {
    10
}
fn default_model() -> String {
    "gpt-4o".into()
}
fn default_max_tokens() -> u32 {
    4096
}
fn default_max_frames() -> usize {
    crate::gateway::DEFAULT_MAX_FRAMES
}
fn default_runs_root() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn new(target: impl Into<String>, inventory_path: impl Into<PathBuf>) -> Self {
        Self {
            target: target.into(),
            inventory_path: inventory_path.into(),
            iterations: default_iterations(),
            temperatures: Temperatures::default(),
            seed: 0,
            prompt_dir: None,
            model_id: default_model(),
            max_tokens: default_max_tokens(),
            max_frames: default_max_frames(),
            workspace: WorkspaceConfig::default(),
            sim: SimParams::default(),
            camera: CameraSpec::default(),
            runs_root: default_runs_root(),
            run_id: None,
            backend: String::new(),
        }
    }

    pub fn check(&self) -> Result<(), OrchestratorError> {
        if self.target.trim().is_empty() {
            return Err(OrchestratorError::Config("target name is empty".into()));
        }
        if self.iterations < 1 {
            return Err(OrchestratorError::Config("iterations must be at least 1".into()));
        }
        for (name, t) in self.temperatures.all() {
            if !(0.0..=2.0).contains(&t) {
                return Err(OrchestratorError::Config(format!("{name} temperature {t} outside [0, 2]")));
            }
        }
        if self.max_frames == 0 {
            return Err(OrchestratorError::Config("max_frames must be positive".into()));
        }
        self.sim.check().map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    /// Explicit run id, else `<target slug>-s<seed>`.
    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| format!("{}-s{}", slug(&self.target), self.seed))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_root.join(self.run_id())
    }
}

pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-').to_string();
    if out.is_empty() {
        "run".into()
    } else {
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    JudgeFailed,
    ReplanFailed,
    OrderFailed,
    PositionFailed,
    PositionViolations,
    CarriedForward,
    MissingBlocks,
    ExecutionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub flags: Vec<Flag>,
    pub plan: AssemblyPlan,
    #[serde(rename = "match")]
    pub matching: MatchResult,
    /// Placed-and-stable blocks over plan size.
    pub stable_fraction: f64,
    pub violations: Vec<String>,
    pub errors: Vec<String>,
    pub judge: JudgeReport,
    /// Call tags issued during this iteration, in order.
    pub calls: Vec<String>,
    /// Artifact paths relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

impl IterationRecord {
    pub fn has_missing(&self) -> bool {
        !self.matching.missing.is_empty()
    }

    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub qualified: Vec<u32>,
    pub bracket: Option<Bracket>,
    pub winner: Option<u32>,
    pub calls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run_id: String,
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    pub selection: Option<SelectionRecord>,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serializes")
    }

    pub fn load(run_dir: &Path) -> Result<Self, OrchestratorError> {
        let path = run_dir.join("runlog.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))
    }
}

/// Outcome of one tier call after its single retry.
enum Tier<T> {
    Ok(T),
    Failed(String),
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), OrchestratorError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Binds a configuration, an inventory and a model gateway.
pub struct Pipeline<'a> {
    cfg: &'a RunConfig,
    inv: &'a BlockInventory,
    gw: &'a Gateway,
    prompts: PromptSet,
    inventory_json: String,
    run_dir: Option<PathBuf>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, inv: &'a BlockInventory, gw: &'a Gateway) -> Result<Self, OrchestratorError> {
        cfg.check()?;
        if inv.is_empty() {
            return Err(OrchestratorError::Model(ModelError::EmptyInventory));
        }
        let prompts = PromptSet::load(cfg.prompt_dir.as_deref())?;
        Ok(Self { cfg, inv, gw, prompts, inventory_json: inv.to_json(), run_dir: None })
    }

    /// Persist artifacts under `dir` as the run progresses.
    pub fn persist_to(mut self, dir: impl Into<PathBuf>) -> Self {
        self.run_dir = Some(dir.into());
        self
    }

    fn request(&self, t: &PromptTemplate, vars: &[(&str, &str)], temperature: f64, expect_json: bool) -> ChatRequest {
        ChatRequest {
            model_id: self.cfg.model_id.clone(),
            messages: vec![ChatMessage::system(t.system(vars)), ChatMessage::user(t.user(vars))],
            temperature,
            max_tokens: self.cfg.max_tokens,
            expect_json,
        }
    }

    /// One call plus at most one corrective retry.
    fn call<T>(
        &self,
        req: &ChatRequest,
        tag: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Tier<T>, GatewayError> {
        let first = self.gw.complete(req, tag)?;
        let err = match parse(&first) {
            Ok(v) => return Ok(Tier::Ok(v)),
            Err(e) => e,
        };
        log::warn!("{tag}: {err}; retrying");
        let retry = corrective(req, &first, &format!("Your previous response was rejected: {err}. Reply again, following the required format exactly."));
        let second = self.gw.complete(&retry, &format!("{tag}/retry"))?;
        Ok(match parse(&second) {
            Ok(v) => Tier::Ok(v),
            Err(e) => Tier::Failed(e),
        })
    }

    pub fn inventory_json(&self) -> &str {
        &self.inventory_json
    }

    /// Judge request for one executed attempt; semantic names are removed.
    pub fn judge_request(&self, plan: &AssemblyPlan, m: &MatchResult, frames: &FrameSequence) -> Result<ChatRequest, GatewayError> {
        let missing = pretty(&m.missing);
        let stripped = pretty(&plan.to_value_without_names());
        let vars = [
            ("target", self.cfg.target.as_str()),
            ("inventory", self.inventory_json.as_str()),
            ("missing", missing.as_str()),
            ("plan", stripped.as_str()),
        ];
        let req = self.request(&self.prompts.judge, &vars, self.cfg.temperatures.judge, true);
        attach_animation(req, frames, self.cfg.max_frames)
    }

    /// Returns the report and, when the response was rejected twice, the reason.
    pub fn judge(
        &self,
        plan: &AssemblyPlan,
        m: &MatchResult,
        frames: &FrameSequence,
        iteration: u32,
    ) -> Result<(JudgeReport, Option<String>), GatewayError> {
        let req = self.judge_request(plan, m, frames)?;
        let missing = m.missing.len();
        let parse = |text: &str| {
            let v = extract_json(text).map_err(|e| e.to_string())?;
            JudgeReport::from_value(v, missing)
        };
        Ok(match self.call(&req, &format!("judge/{iteration}"), parse)? {
            Tier::Ok(r) => (r, None),
            Tier::Failed(e) => (JudgeReport::default(), Some(e)),
        })
    }

    pub fn replan_request(&self, feedback: &JudgeReport, history: &[AssemblyPlan], instruction: &str) -> ChatRequest {
        let feedback = feedback.to_json();
        let history = pretty(&history);
        let vars = [
            ("target", self.cfg.target.as_str()),
            ("inventory", self.inventory_json.as_str()),
            ("feedback", feedback.as_str()),
            ("instruction", instruction),
            ("history", history.as_str()),
        ];
        self.request(&self.prompts.replan, &vars, self.cfg.temperatures.replan, true)
    }

    fn replan(&self, feedback: &JudgeReport, history: &[AssemblyPlan], instruction: &str, iteration: u32) -> Result<Tier<HighLevelPlan>, GatewayError> {
        let req = self.replan_request(feedback, history, instruction);
        self.call(&req, &format!("replan/{iteration}"), parse_high_level)
    }

    pub fn order_request(&self, high: &HighLevelPlan) -> ChatRequest {
        let plan = high.to_json();
        let vars = [("target", self.cfg.target.as_str()), ("plan", plan.as_str())];
        self.request(&self.prompts.order, &vars, self.cfg.temperatures.order, true)
    }

    fn order(&self, high: &HighLevelPlan, iteration: u32) -> Result<Tier<HighLevelPlan>, GatewayError> {
        let req = self.order_request(high);
        let parse = |text: &str| {
            let out = parse_high_level(text)?;
            if out.is_permutation_of(high) {
                Ok(out)
            } else {
                Err("the output is not a reordering of the input blocks".to_string())
            }
        };
        self.call(&req, &format!("order/{iteration}"), parse)
    }

    pub fn position_request(&self, ordered: &HighLevelPlan, iteration: u32) -> ChatRequest {
        let plan = ordered.to_json();
        let [tx, ty] = self.cfg.workspace.table_m;
        let (tx, ty, region, it) = (tx.to_string(), ty.to_string(), self.cfg.workspace.assembly_region_m.to_string(), iteration.to_string());
        let vars = [
            ("target", self.cfg.target.as_str()),
            ("inventory", self.inventory_json.as_str()),
            ("plan", plan.as_str()),
            ("table_x", tx.as_str()),
            ("table_y", ty.as_str()),
            ("region", region.as_str()),
            ("iteration", it.as_str()),
        ];
        self.request(&self.prompts.position, &vars, self.cfg.temperatures.position, true)
    }

    /// Explicit plan plus any workspace violations left after the retry.
    fn position(&self, ordered: &HighLevelPlan, iteration: u32) -> Result<Tier<(AssemblyPlan, Vec<String>)>, GatewayError> {
        let req = self.position_request(ordered, iteration);
        let tag = format!("position/{iteration}");
        let parse = |text: &str| -> Result<(AssemblyPlan, Vec<String>), String> {
            let plan = parse_positioned(text, &self.cfg.target, iteration)?;
            let violations = validate_plan(&plan, &self.cfg.workspace).iter().map(|v| v.to_string()).collect();
            Ok((plan, violations))
        };
        let first_text = self.gw.complete(&req, &tag)?;
        let first = parse(&first_text);
        let correction = match &first {
            Ok((_, v)) if v.is_empty() => return Ok(Tier::Ok(first.expect("checked"))),
            Ok((_, v)) => format!(
                "The plan violates the workspace constraints:\n- {}\nReturn the corrected full plan in the same format.",
                v.join("\n- ")
            ),
            Err(e) => format!("Your previous response was rejected: {e}. Reply again, following the required format exactly."),
        };
        log::warn!("{tag}: corrective retry");
        let retry = corrective(&req, &first_text, &correction);
        let second_text = self.gw.complete(&retry, &format!("{tag}/retry"))?;
        Ok(match (parse(&second_text), first) {
            (Ok(p), _) => Tier::Ok(p),
            (Err(_), Ok(p)) => Tier::Ok(p),
            (Err(e), Err(_)) => Tier::Failed(e),
        })
    }

    /// Replan, Order and Position for one iteration. `None` means a tier
    /// failed and the flags say which.
    fn design(
        &self,
        feedback: &JudgeReport,
        history: &[AssemblyPlan],
        iteration: u32,
        flags: &mut Vec<Flag>,
        errors: &mut Vec<String>,
    ) -> Result<Option<(AssemblyPlan, Vec<String>)>, GatewayError> {
        let instruction = if iteration == 0 { INITIAL_INSTRUCTION } else { REVISE_INSTRUCTION };
        let high = match self.replan(feedback, history, instruction, iteration)? {
            Tier::Ok(h) => h,
            Tier::Failed(e) => {
                flags.push(Flag::ReplanFailed);
                errors.push(format!("replan: {e}"));
                return Ok(None);
            }
        };
        let ordered = match self.order(&high, iteration)? {
            Tier::Ok(o) => o,
            Tier::Failed(e) => {
                flags.push(Flag::OrderFailed);
                errors.push(format!("order: {e}"));
                high
            }
        };
        match self.position(&ordered, iteration)? {
            Tier::Ok(p) => Ok(Some(p)),
            Tier::Failed(e) => {
                flags.push(Flag::PositionFailed);
                errors.push(format!("position: {e}"));
                Ok(None)
            }
        }
    }

    /// Iteration 0: one design pass with empty feedback.
    pub fn initial_plan(&self) -> Result<AssemblyPlan, OrchestratorError> {
        let mut flags = Vec::new();
        let mut errors = Vec::new();
        match self.design(&JudgeReport::default(), &[], 0, &mut flags, &mut errors)? {
            Some((plan, _)) => Ok(plan),
            None => Err(OrchestratorError::Aborted { iteration: 0, reason: errors.join("; ") }),
        }
    }

    /// Executes the assignable part of the plan and renders the attempt.
    fn execute(&self, plan: &AssemblyPlan, m: &MatchResult, iteration: u32, errors: &mut Vec<String>) -> Result<(ExecutionReport, FrameSequence, f64), OrchestratorError> {
        let subset = AssemblyPlan {
            target: plan.target.clone(),
            iteration: plan.iteration,
            blocks: m.assignments.iter().map(|a| plan.blocks[a.plan_index].clone()).collect(),
        };
        let seed = self.cfg.seed.wrapping_add(iteration as u64);
        let report = if subset.blocks.is_empty() {
            None
        } else {
            match execute_plan(&subset, self.inv, &self.cfg.workspace, &self.cfg.sim, seed) {
                Ok(r) => Some(r),
                Err(e) => {
                    errors.push(format!("execution: {e}"));
                    None
                }
            }
        };
        let report = report.unwrap_or_else(|| ExecutionReport {
            per_block: Vec::new(),
            stable_fraction: 0.0,
            all_placed: false,
            frames: vec![FrameRecord { index: 0, caption: "initial".into(), blocks: Vec::new() }],
        });
        let frames = render_sequence(&report, &self.cfg.workspace, &self.cfg.camera, ColorMode::UniformGreen)?;
        let stable = if plan.blocks.is_empty() {
            0.0
        } else {
            (report.stable_fraction * subset.blocks.len() as f64).round() / plan.blocks.len() as f64
        };
        Ok((report, frames, stable))
    }

    fn persist_iteration(
        &self,
        record: &mut IterationRecord,
        report: &ExecutionReport,
        frames: &FrameSequence,
    ) -> Result<(), OrchestratorError> {
        let Some(root) = &self.run_dir else { return Ok(()) };
        let rel = format!("iter_{}", record.iteration);
        let dir = root.join(&rel);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        write(&dir.join("plan.json"), record.plan.to_json())?;
        write(&dir.join("match.json"), pretty(&record.matching))?;
        write(&dir.join("report.json"), report.to_json())?;
        write(&dir.join("judge.json"), record.judge.to_json())?;
        frames.write_to(&dir)?;
        for (k, f) in [("plan", "plan.json"), ("match", "match.json"), ("report", "report.json"), ("judge", "judge.json"), ("frames", "frames"), ("gif", "attempt.gif")] {
            record.artifacts.insert(k.into(), format!("{rel}/{f}"));
        }
        Ok(())
    }

    fn persist_log(&self, log: &RunLog) -> Result<(), OrchestratorError> {
        if let Some(root) = &self.run_dir {
            write(&root.join("runlog.json"), log.to_json())?;
        }
        Ok(())
    }

    /// Runs every iteration. Tier failures carry the previous plan forward;
    /// gateway failures stop the run with the log persisted so far.
    pub fn run_iterations(&self) -> Result<RunLog, OrchestratorError> {
        let mut log = RunLog { run_id: self.cfg.run_id(), config: self.cfg.clone(), iterations: Vec::new(), selection: None };
        if let Some(root) = &self.run_dir {
            write(&root.join("config.json"), pretty(self.cfg))?;
        }
        let mut history: Vec<AssemblyPlan> = Vec::new();
        let mut feedback = JudgeReport::default();
        for i in 0..self.cfg.iterations {
            let calls_before = self.gw.transcript().len();
            let mut flags = Vec::new();
            let mut errors = Vec::new();
            let designed = match self.design(&feedback, &history, i, &mut flags, &mut errors) {
                Ok(d) => d,
                Err(e) => {
                    self.persist_log(&log)?;
                    return Err(e.into());
                }
            };
            let (plan, violations) = match designed {
                Some((plan, violations)) => (plan, violations),
                None => match history.last() {
                    Some(prev) => {
                        flags.push(Flag::CarriedForward);
                        (AssemblyPlan { iteration: i, ..prev.clone() }, Vec::new())
                    }
                    None => {
                        self.persist_log(&log)?;
                        return Err(OrchestratorError::Aborted { iteration: i, reason: errors.join("; ") });
                    }
                },
            };
            if !violations.is_empty() {
                flags.push(Flag::PositionViolations);
                for v in &violations {
                    log::warn!("iteration {i}: {v}");
                }
            }
            let m = match_blocks(&plan, self.inv);
            if !m.is_complete() {
                flags.push(Flag::MissingBlocks);
            }
            let (report, frames, stable_fraction) = self.execute(&plan, &m, i, &mut errors)?;
            if errors.iter().any(|e| e.starts_with("execution:")) {
                flags.push(Flag::ExecutionFailed);
            }
            let judged = match self.judge(&plan, &m, &frames, i) {
                Ok(j) => j,
                Err(e) => {
                    self.persist_log(&log)?;
                    return Err(e.into());
                }
            };
            let (judge, judge_error) = judged;
            if let Some(e) = judge_error {
                flags.push(Flag::JudgeFailed);
                errors.push(format!("judge: {e}"));
            }
            let calls = self.gw.transcript()[calls_before..].iter().map(|r| r.tag.clone()).collect();
            let mut record = IterationRecord {
                iteration: i,
                flags,
                plan: plan.clone(),
                matching: m,
                stable_fraction,
                violations,
                errors,
                judge: judge.clone(),
                calls,
                artifacts: BTreeMap::new(),
            };
            self.persist_iteration(&mut record, &report, &frames)?;
            log.iterations.push(record);
            self.persist_log(&log)?;
            history.push(plan);
            feedback = judge;
        }
        Ok(log)
    }

    pub fn settled_render(&self, plan: &AssemblyPlan) -> Result<RgbImage, OrchestratorError> {
        Ok(render_plan_settled(plan, self.inv, &self.cfg.workspace, &self.cfg.sim, &self.cfg.camera)?)
    }

    pub fn select_request(&self, a: &RgbImage, b: &RgbImage) -> Result<ChatRequest, OrchestratorError> {
        let mut req = self.request(&self.prompts.select, &[("target", self.cfg.target.as_str())], self.cfg.temperatures.selector, false);
        let msg = req.last_user_mut();
        msg.parts.push(Part::png(&encode_png(a)?));
        msg.parts.push(Part::png(&encode_png(b)?));
        Ok(req)
    }

    /// Knockout over the designs without missing blocks.
    pub fn select(&self, log: &RunLog) -> Result<SelectionRecord, OrchestratorError> {
        let qualified: Vec<u32> = log
            .iterations
            .iter()
            .filter(|r| !r.has_missing() && !r.plan.blocks.is_empty())
            .map(|r| r.iteration)
            .collect();
        let calls_before = self.gw.transcript().len();
        let plans: BTreeMap<u32, &AssemblyPlan> = log.iterations.iter().map(|r| (r.iteration, &r.plan)).collect();
        let mut renders: BTreeMap<u32, RgbImage> = BTreeMap::new();
        let mut render = |i: u32| -> Result<RgbImage, OrchestratorError> {
            if let Some(img) = renders.get(&i) {
                return Ok(img.clone());
            }
            let img = self.settled_render(plans[&i])?;
            renders.insert(i, img.clone());
            Ok(img)
        };
        let bracket = knockout(&qualified, |round, index, a, b| -> Result<(u32, Decision), OrchestratorError> {
            let req = self.select_request(&render(a)?, &render(b)?)?;
            let tier = self.call(&req, &format!("select/{round}/{index}"), parse_choice)?;
            Ok(match tier {
                Tier::Ok('A') => (a, Decision::Model),
                Tier::Ok(_) => (b, Decision::Model),
                Tier::Failed(_) => (a.max(b), Decision::Rule),
            })
        })?;
        let calls = self.gw.transcript()[calls_before..].iter().map(|r| r.tag.clone()).collect();
        let winner = bracket.as_ref().map(|b| b.winner);
        Ok(SelectionRecord { qualified, bracket, winner, calls })
    }
}

fn corrective(req: &ChatRequest, previous: &str, correction: &str) -> ChatRequest {
    let mut retry = req.clone();
    retry.messages.push(ChatMessage { role: Role::Assistant, parts: vec![Part::Text(previous.to_string())] });
    retry.messages.push(ChatMessage::user(correction));
    retry
}

fn parse_high_level(text: &str) -> Result<HighLevelPlan, String> {
    HighLevelPlan::from_value(extract_json(text).map_err(|e| e.to_string())?)
}

fn parse_positioned(text: &str, target: &str, iteration: u32) -> Result<AssemblyPlan, String> {
    let mut v = extract_json(text).map_err(|e| e.to_string())?;
    let obj = v.as_object_mut().ok_or("expected a JSON object")?;
    obj.insert("target".into(), json!(target));
    obj.insert("iteration".into(), json!(iteration));
    let plan = AssemblyPlan::from_value(v).map_err(|e| e.to_string())?;
    if plan.blocks.is_empty() {
        return Err("plan has no blocks".into());
    }
    Ok(plan)
}

/// Accepts a bare `A` or `B`, ignoring quotes, periods and case.
pub fn parse_choice(text: &str) -> Result<char, String> {
    let t = text.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '*' || c.is_whitespace());
    match t.to_ascii_uppercase().as_str() {
        "A" => Ok('A'),
        "B" => Ok('B'),
        _ => Err(format!("expected \"A\" or \"B\", got {:?}", text.trim())),
    }
}

/// Runs every iteration and the selection, persisting under the run directory.
pub fn run(cfg: &RunConfig, inv: &BlockInventory, gw: &Gateway) -> Result<RunLog, OrchestratorError> {
    let dir = cfg.run_dir();
    prepare_run_dir(&dir)?;
    let pipeline = Pipeline::new(cfg, inv, gw)?.persist_to(&dir);
    gw.record_to(&dir.join("transcript.jsonl"))?;
    let mut log = pipeline.run_iterations()?;
    let selection = pipeline.select(&log)?;
    write(&dir.join("selection.json"), pretty(&selection))?;
    let none = selection.winner.is_none();
    log.selection = Some(selection);
    write(&dir.join("runlog.json"), log.to_json())?;
    if none {
        return Err(OrchestratorError::NoQualifiedDesign);
    }
    Ok(log)
}

/// Clears artifacts of an earlier run with the same id.
fn prepare_run_dir(dir: &Path) -> Result<(), OrchestratorError> {
    if dir.join("config.json").is_file() {
        std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Taj Mahal"), "taj-mahal");
        assert_eq!(slug("  house "), "house");
        assert_eq!(slug("!!"), "run");
    }

    #[test]
    fn choice_parsing() {
        assert_eq!(parse_choice(" a."), Ok('A'));
        assert_eq!(parse_choice("\"B\""), Ok('B'));
        assert!(parse_choice("A or B").is_err());
    }

    #[test]
    fn config_checks() {
        let mut c = RunConfig::new("house", "inv.json");
        assert!(c.check().is_ok());
        assert_eq!(c.run_id(), "house-s0");
        c.iterations = 0;
        assert!(c.check().is_err());
        c.iterations = 1;
        c.temperatures.position = 2.1;
        assert!(c.check().is_err());
    }

    #[test]
    fn positioned_yaw_is_normalized() {
        let text = r#"{"blocks": [{"name": "a", "color": "red", "shape": "cuboid", "dims": [0.04, 0.04, 0.04], "position": [0, 0, 0.02], "yaw": 370}]}"#;
        let p = parse_positioned(text, "house", 3).unwrap();
        assert_eq!(p.blocks[0].pose.yaw_deg, 10.0);
        assert_eq!(p.iteration, 3);
        assert_eq!(p.target, "house");
    }
}
