//! The bundled house transcript and what it records.
//!
//! Set `IDFRA_BLESS=1` to re-record the fixtures from the stub designer
//! after a change to prompts, rendering or the simulator.

mod common;

use common::*;
use idfra::gateway::{Gateway, ReplayStore};
use idfra::orchestrator::{run, stub::StubDesigner, HighLevelPlan, Pipeline, SuggestionKind};

fn record_stub(root: &std::path::Path, stub: StubDesigner) -> Vec<u8> {
    let gw = Gateway::scripted(stub);
    let _ = run(&house_config(root), &house_inventory(), &gw);
    std::fs::read(root.join("house-s0/transcript.jsonl")).unwrap()
}

/// Every stub-generated fixture, regenerated from scratch.
fn regenerate() -> Vec<(&'static str, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let house = record_stub(dir.path(), StubDesigner::new("house"));
    let log = idfra::orchestrator::RunLog::load(&dir.path().join("house-s0")).unwrap();
    let winner = log.selection.as_ref().and_then(|s| s.winner).unwrap();
    let cfg = house_config(dir.path());
    let inv = house_inventory();
    let gw = Gateway::scripted(StubDesigner::new("house"));
    let png = idfra::render::encode_png(
        &Pipeline::new(&cfg, &inv, &gw).unwrap().settled_render(&log.iterations[winner as usize].plan).unwrap(),
    )
    .unwrap();
    let rank = rank_transcript(&png);
    let missing_dir = tempfile::tempdir().unwrap();
    let missing = record_stub(missing_dir.path(), StubDesigner::all_missing("house"));
    vec![("house.jsonl", house), ("house.png", png), ("rank_house.jsonl", rank), ("house_all_missing.jsonl", missing)]
}

/// `eval rank fixtures/house.png --label house --n 10 --runs 3` with default settings.
fn rank_transcript(png: &[u8]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rank.jsonl");
    let gw = Gateway::scripted(StubDesigner::new("house"));
    gw.record_to(&path).unwrap();
    let pool = idfra::evalkit::builtin_pool();
    let eval = idfra::evalkit::RankEval {
        image: "house.png",
        image_png: png,
        label: "house",
        pool: &pool,
        list_sizes: &[10],
        runs: 3,
        seed: 0,
        model_id: "gpt-4o",
    };
    idfra::evalkit::run_rank_eval(&gw, &idfra::prompts::PromptSet::builtin().rank, &eval).unwrap();
    std::fs::read(&path).unwrap()
}

#[test]
fn fixtures_match_stub_recordings() {
    let bless = std::env::var("IDFRA_BLESS").as_deref() == Ok("1");
    let mut stale = Vec::new();
    for (name, bytes) in regenerate() {
        if bless {
            std::fs::write(fixture(name), &bytes).unwrap();
        }
        if std::fs::read(fixture(name)).ok().as_deref() != Some(bytes.as_slice()) {
            stale.push(name);
        }
    }
    assert!(stale.is_empty(), "stale fixtures {stale:?}; re-run with IDFRA_BLESS=1");
}

#[test]
fn replay_reproduces_the_recording() {
    let dir = tempfile::tempdir().unwrap();
    let gw = golden_replay();
    let log = run(&house_config(dir.path()), &house_inventory(), &gw).unwrap();
    assert_eq!(gw.network_attempts(), 0);
    assert_eq!(log.iterations.len(), 10);
    assert!(log.iterations.iter().enumerate().all(|(i, r)| r.iteration == i as u32));
    let rerecorded = std::fs::read_to_string(dir.path().join("house-s0/transcript.jsonl")).unwrap();
    assert_eq!(rerecorded, std::fs::read_to_string(fixture("house.jsonl")).unwrap());
}

fn responses() -> ReplayStore {
    ReplayStore::load(&fixture("house.jsonl")).unwrap()
}

fn response(tag: &str) -> String {
    let text = std::fs::read_to_string(fixture("house.jsonl")).unwrap();
    text.lines()
        .map(|l| serde_json::from_str::<idfra::gateway::TranscriptRecord>(l).unwrap())
        .find(|r| r.tag == tag)
        .unwrap_or_else(|| panic!("no {tag}"))
        .response
}

#[test]
fn iteration_zero_plan_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let gw = golden_replay();
    let inv = house_inventory();
    let cfg = house_config(dir.path());
    let p = Pipeline::new(&cfg, &inv, &gw).unwrap();
    let plan = p.initial_plan().unwrap();
    assert_eq!(plan.iteration, 0);
    assert!(idfra::validate::validate_plan(&plan, &cfg.workspace).is_empty());
    assert!(idfra::matching::match_blocks(&plan, &inv).is_complete());
    let again = Pipeline::new(&cfg, &inv, &golden_replay()).unwrap().initial_plan().unwrap();
    assert_eq!(plan.to_json(), again.to_json());
    assert!(!responses().is_empty());
}

#[test]
fn recorded_judge_reports_assess_semantics() {
    let v = idfra::gateway::extract_json(&response("judge/1")).unwrap();
    assert!(v["semantic_assessment"]["resembles_target"].is_boolean());
    let r = idfra::orchestrator::JudgeReport::from_value(v, 0).unwrap();
    assert!(r.semantic_assessment.score_0_10 >= 0.0);
}

#[test]
fn recorded_replans_anchor_every_block() {
    for i in 0..10 {
        let plan = HighLevelPlan::from_value(idfra::gateway::extract_json(&response(&format!("replan/{i}"))).unwrap()).unwrap();
        assert!(plan.blocks.iter().all(|b| b.placement.contains("on ")), "replan/{i}");
    }
}

#[test]
fn chimney_removal_is_followed() {
    let mut checked = 0;
    for i in 0..9 {
        let judge = idfra::gateway::extract_json(&response(&format!("judge/{i}"))).unwrap();
        let asks_removal = judge["suggestions"]
            .as_array()
            .unwrap()
            .iter()
            .any(|s| s["kind"] == "remove_feature" && s["detail"] == "chimney");
        if asks_removal {
            let next = response(&format!("replan/{}", i + 1));
            assert!(!next.contains("chimney"), "replan/{} keeps the chimney", i + 1);
            checked += 1;
        }
    }
    assert!(checked >= 4);
    let v = idfra::gateway::extract_json(&response("judge/0")).unwrap();
    let r = idfra::orchestrator::JudgeReport::from_value(v, 0).unwrap();
    assert!(r.suggestions.iter().any(|s| s.kind == SuggestionKind::RemoveFeature));
}

#[test]
fn order_puts_base_before_roof() {
    let replan = HighLevelPlan::from_value(idfra::gateway::extract_json(&response("replan/0")).unwrap()).unwrap();
    let order = HighLevelPlan::from_value(idfra::gateway::extract_json(&response("order/0")).unwrap()).unwrap();
    let pos = |p: &HighLevelPlan, n: &str| p.blocks.iter().position(|b| b.name == n).unwrap();
    assert!(pos(&replan, "roof") < pos(&replan, "left_wall"));
    assert!(pos(&order, "left_wall") < pos(&order, "roof"));
    assert!(replan.is_permutation_of(&order));
}

#[test]
fn recorded_positions_stay_in_workspace() {
    let ws = idfra::validate::WorkspaceConfig::default();
    for i in 0..10 {
        let mut v = idfra::gateway::extract_json(&response(&format!("position/{i}"))).unwrap();
        v["target"] = "house".into();
        let plan = idfra::model::AssemblyPlan::from_value(v).unwrap();
        assert!(idfra::validate::validate_plan(&plan, &ws).is_empty(), "position/{i}");
    }
}

#[test]
fn edited_template_is_request_drift() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = dir.path().join("prompts");
    std::fs::create_dir_all(&prompts).unwrap();
    let judge = include_str!("../assets/prompts/judge.txt").replace("precise and critical", "careful");
    std::fs::write(prompts.join("judge.txt"), judge).unwrap();
    let mut cfg = house_config(dir.path());
    cfg.prompt_dir = Some(prompts);
    let err = run(&cfg, &house_inventory(), &golden_replay()).unwrap_err();
    assert!(err.to_string().contains("request drift"), "{err}");
    assert!(err.to_string().contains("judge/0"), "{err}");
}
