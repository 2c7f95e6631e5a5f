use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use idfra::evalkit::{
    builtin_pool, designs_from_log, feasibility_trials, group_rank_metrics, improvement_scores, load_votes, parse_pool,
    rule_comparator, run_rank_eval, tally_votes, write_improvement_csv, BackendSemantic, FeasibilityStats, NoSemantic,
    RankEval, RankMetrics, SemanticJudge, VerdictFile, format_rate,
};
use idfra::matching::match_blocks;
use idfra::model::{parse_inventory, parse_plan, AssemblyPlan, BlockInventory};
use idfra::orchestrator::{run, RunLog};
use idfra::prompts::PromptSet;
use idfra::render::{encode_png, render_plan_settled, render_sequence, CameraSpec, ColorMode, Projection};
use idfra::sim::{execute_plan, NoiseParams, SimParams};
use idfra::validate::validate_plan;

use crate::config::{resolve, Settings};
use crate::{Cli, Colors, Command, EvalCommand, View};

pub fn dispatch(cli: &Cli) -> Result<u8> {
    let s = resolve(&cli.global)?;
    match &cli.command {
        Command::Run(a) => cmd_run(&s, a),
        Command::Exec(a) => cmd_exec(&s, a),
        Command::Render(a) => cmd_render(&s, a),
        Command::Validate(a) => cmd_validate(&s, a),
        Command::Eval(EvalCommand::Rank(a)) => cmd_rank(&s, a),
        Command::Eval(EvalCommand::Feasibility(a)) => cmd_feasibility(&s, a),
        Command::Eval(EvalCommand::Improvement(a)) => cmd_improvement(&s, a),
        Command::Eval(EvalCommand::Tally(a)) => cmd_tally(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_inventory(path: &Path) -> Result<BlockInventory> {
    parse_inventory(&read(path)?).with_context(|| format!("parsing inventory {}", path.display()))
}

fn load_plan(path: &Path) -> Result<AssemblyPlan> {
    parse_plan(&read(path)?).with_context(|| format!("parsing plan {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn sim_params(s: &Settings, noiseless: bool) -> SimParams {
    if noiseless {
        SimParams { noise: NoiseParams::zero(), ..s.sim.clone() }
    } else {
        s.sim.clone()
    }
}

fn cmd_run(s: &Settings, a: &crate::RunArgs) -> Result<u8> {
    let inv = load_inventory(&a.inventory)?;
    let cfg = s.run_config(&a.target, &a.inventory, a.iterations, a.run_id.clone())?;
    let gw = s.gateway(&a.target)?;
    let result = run(&cfg, &inv, &gw);
    let dir = cfg.run_dir();
    match result {
        Ok(log) => {
            let winner = log.selection.as_ref().and_then(|x| x.winner).expect("run returns a winner");
            println!("winner: iteration {winner}");
            println!("run directory: {}", dir.display());
            Ok(0)
        }
        Err(e) => {
            eprintln!("run directory: {}", dir.display());
            Err(e.into())
        }
    }
}

fn cmd_exec(s: &Settings, a: &crate::ExecArgs) -> Result<u8> {
    let plan = load_plan(&a.plan)?;
    let inv = load_inventory(&a.inventory)?;
    let params = sim_params(s, a.noiseless);
    let report = execute_plan(&plan, &inv, &s.workspace, &params, s.seed)?;
    let mode = match a.colors {
        Colors::Plan => ColorMode::PlanColors,
        Colors::Green => ColorMode::UniformGreen,
    };
    let frames = render_sequence(&report, &s.workspace, &s.camera, mode)?;
    write(&a.out.join("report.json"), report.to_json())?;
    frames.write_to(&a.out)?;
    for b in &report.per_block {
        println!("{:>3} {:<20} {}", b.index, b.name, b.status.label());
    }
    println!("stable fraction: {}", report.stable_fraction);
    println!("output: {}", a.out.display());
    Ok(0)
}

fn cmd_render(s: &Settings, a: &crate::RenderArgs) -> Result<u8> {
    let plan = load_plan(&a.plan)?;
    let inv = load_inventory(&a.inventory)?;
    let cam = match a.view {
        None => s.camera.clone(),
        Some(View::Iso) => CameraSpec::for_projection(Projection::Isometric),
        Some(View::Front) => CameraSpec::for_projection(Projection::Front),
        Some(View::Top) => CameraSpec::for_projection(Projection::Top),
    };
    let img = render_plan_settled(&plan, &inv, &s.workspace, &s.sim, &cam)?;
    write(&a.out, encode_png(&img)?)?;
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn cmd_validate(s: &Settings, a: &crate::ValidateArgs) -> Result<u8> {
    let plan = load_plan(&a.plan)?;
    let inv = load_inventory(&a.inventory)?;
    let m = match_blocks(&plan, &inv);
    let violations = validate_plan(&plan, &s.workspace);
    let out = serde_json::json!({ "match": m, "violations": violations });
    println!("{}", serde_json::to_string_pretty(&out)?);
    for missing in &m.missing {
        eprintln!("missing: block {} ({})", missing.plan_index, missing.block);
    }
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Ok(if m.is_complete() && violations.is_empty() { 0 } else { 1 })
}

fn cmd_rank(s: &Settings, a: &crate::RankArgs) -> Result<u8> {
    let png = std::fs::read(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let pool = match a.pool.as_ref().or(s.pool.as_ref()) {
        Some(p) => parse_pool(&read(p)?),
        None => builtin_pool(),
    };
    let prompts = PromptSet::load(s.prompt_dir.as_deref())?;
    let gw = s.gateway(&a.label)?;
    if let Some(path) = &a.record {
        gw.record_to(path)?;
    }
    let image = a.image.file_name().map_or_else(|| a.image.display().to_string(), |n| n.to_string_lossy().into_owned());
    let model_id = s.model_id();
    let eval = RankEval {
        image: &image,
        image_png: &png,
        label: &a.label,
        pool: &pool,
        list_sizes: &a.list_sizes,
        runs: a.runs,
        seed: s.seed,
        model_id: &model_id,
    };
    let trials = run_rank_eval(&gw, &prompts.rank, &eval)?;
    let metrics = group_rank_metrics(&trials)?;
    let rows: Vec<(String, RankMetrics)> = metrics.iter().map(|m| (a.method.clone(), m.clone())).collect();
    RankMetrics::write_csv(&rows, &a.out)?;
    if let Some(p) = &a.trials_out {
        write(p, serde_json::to_string_pretty(&trials)?)?;
    }
    println!("{:>4} {:>8} {:>8} {:>10}", "N", "top1 %", "avg", "relative %");
    for m in &metrics {
        println!("{:>4} {:>8.2} {:>8.2} {:>10.2}", m.n, m.top1_pct, m.avg_rank, m.relative_rank_pct);
    }
    let flagged = trials.iter().filter(|t| t.flagged).count();
    if flagged > 0 {
        eprintln!("{flagged} trials had unusable rankings and were scored as rank N");
    }
    Ok(0)
}

fn cmd_feasibility(s: &Settings, a: &crate::FeasibilityArgs) -> Result<u8> {
    let plan = load_plan(&a.plan)?;
    let inv = match &a.inventory {
        Some(p) => load_inventory(p)?,
        None => BlockInventory::covering(&plan)?,
    };
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let stats = feasibility_trials(&plan, &inv, &s.workspace, &sim_params(s, a.noiseless), a.trials, s.seed)?;
    let name = a.plan.file_stem().map_or_else(|| "plan".to_string(), |n| n.to_string_lossy().into_owned());
    FeasibilityStats::write_csv(&[(name, stats.clone())], &a.out)?;
    println!("blocks correct % / assemblies successful %");
    println!("{}", stats.summary());
    Ok(0)
}

/// Settled renders for the semantic tie-break; plans with missing blocks
/// are rendered from the blocks that are available.
fn iteration_renders(log: &RunLog, inv: &BlockInventory) -> Result<BTreeMap<u32, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for r in &log.iterations {
        let m = match_blocks(&r.plan, inv);
        let subset = AssemblyPlan {
            blocks: m.assignments.iter().map(|x| r.plan.blocks[x.plan_index].clone()).collect(),
            ..r.plan.clone()
        };
        if subset.blocks.is_empty() {
            continue;
        }
        let img = render_plan_settled(&subset, inv, &log.config.workspace, &log.config.sim, &log.config.camera)?;
        out.insert(r.iteration, encode_png(&img)?);
    }
    Ok(out)
}

fn cmd_improvement(s: &Settings, a: &crate::ImprovementArgs) -> Result<u8> {
    let log = RunLog::load(&a.run_dir)?;
    let designs = designs_from_log(&log);
    let gw;
    let mut semantic: Box<dyn SemanticJudge> = if let Some(v) = &a.verdicts {
        Box::new(VerdictFile::load(v).with_context(|| format!("reading verdicts {}", v.display()))?)
    } else if a.model_compare {
        let inv = load_inventory(&log.config.inventory_path)?;
        gw = s.gateway(&log.config.target)?;
        Box::new(BackendSemantic {
            gateway: &gw,
            template: PromptSet::load(s.prompt_dir.as_deref())?.compare,
            model_id: s.model_id(),
            target: log.config.target.clone(),
            images: iteration_renders(&log, &inv)?,
        })
    } else {
        Box::new(NoSemantic)
    };
    let scores = improvement_scores(&designs, rule_comparator(semantic.as_mut()))?;
    let out = a.out.clone().unwrap_or_else(|| a.run_dir.join("improvement.csv"));
    write_improvement_csv(&designs, &scores, &out)?;
    println!("{:>9} {:>7} {:>7} {:>6}", "iteration", "missing", "stable", "score");
    for (d, sc) in designs.iter().zip(&scores) {
        println!("{:>9} {:>7} {:>7.3} {:>6}", d.iteration, d.missing, d.stable_fraction, sc);
    }
    Ok(0)
}

fn cmd_tally(a: &crate::TallyArgs) -> Result<u8> {
    let votes = load_votes(&a.votes).with_context(|| format!("reading votes {}", a.votes.display()))?;
    let report = tally_votes(&votes);
    if report.accepted == 0 {
        bail!("{} contains no usable votes", a.votes.display());
    }
    report.write_csv(&a.out)?;
    println!("{:<16} {:>6} {:>8} {:>9}", "method", "votes", "win %", "majority");
    for m in report.methods() {
        println!("{:<16} {:>6} {:>8} {:>9}", m, report.totals[&m], format_rate(report.win_rate(&m)), report.majority_wins(&m));
    }
    println!("{} win rate: {}", a.method, format_rate(report.win_rate(&a.method)));
    if report.rejects > 0 {
        eprintln!("{} malformed rows skipped", report.rejects);
    }
    Ok(0)
}
