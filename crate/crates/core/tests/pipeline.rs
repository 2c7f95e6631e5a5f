mod common;

use common::*;
use idfra::gateway::{extract_json, fenced_json, GatewayError, Role, ScriptedModel};
use idfra::orchestrator::stub::StubDesigner;
use idfra::orchestrator::{run, Flag, HighLevelPlan, OrchestratorError, Pipeline, RunLog};
use serde_json::Value;

fn transport_error() -> GatewayError {
    GatewayError::Transport { attempts: 3, message: "connection reset".into() }
}

fn one_iteration(root: &std::path::Path) -> idfra::orchestrator::RunConfig {
    let mut cfg = house_config(root);
    cfg.iterations = 1;
    cfg
}

#[test]
fn crash_mid_run_keeps_completed_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, _) = stub_with(|tag, _, _| (tag == "replan/5").then(|| Err(transport_error())));
    let err = run(&house_config(dir.path()), &house_inventory(), &gw).unwrap_err();
    assert!(matches!(err, OrchestratorError::Gateway(GatewayError::Transport { .. })), "{err}");
    let run_dir = dir.path().join("house-s0");
    for i in 0..5 {
        for f in ["plan.json", "match.json", "report.json", "judge.json", "attempt.gif", "frames/000.png"] {
            assert!(run_dir.join(format!("iter_{i}/{f}")).is_file(), "iter_{i}/{f}");
        }
    }
    assert!(!run_dir.join("iter_5").exists());
    let log = RunLog::load(&run_dir).unwrap();
    assert_eq!(log.iterations.len(), 5);
    let transcript = std::fs::read_to_string(run_dir.join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 5 * 4);
    assert!(!run_dir.join("selection.json").exists());
}

#[test]
fn order_receives_replan_output() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|_, _, _| None);
    let cfg = house_config(dir.path());
    Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let stub = StubDesigner::new("house");
    for i in 0..10 {
        let replan_req = request(&calls, &format!("replan/{i}"));
        let high = HighLevelPlan::from_value(extract_json(&stub.respond(&format!("replan/{i}"), &replan_req).unwrap()).unwrap()).unwrap();
        let order_text = request_text(&request(&calls, &format!("order/{i}")));
        assert!(order_text.contains(&high.to_json()), "order/{i}");
        let ordered = HighLevelPlan::from_value(
            extract_json(&stub.respond(&format!("order/{i}"), &request(&calls, &format!("order/{i}"))).unwrap()).unwrap(),
        )
        .unwrap();
        assert!(request_text(&request(&calls, &format!("position/{i}"))).contains(&ordered.to_json()), "position/{i}");
    }
}

#[test]
fn judge_never_sees_block_names() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|_, _, _| None);
    let cfg = house_config(dir.path());
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    for r in &log.iterations {
        let req = request(&calls, &format!("judge/{}", r.iteration));
        let text = request_text(&req);
        assert!(!text.contains("\"name\""), "judge/{}", r.iteration);
        for b in &r.plan.blocks {
            assert!(!text.contains(&b.name), "judge/{} leaks {}", r.iteration, b.name);
        }
        let images: usize = req.messages.iter().map(|m| m.image_count()).sum();
        assert!((1..=12).contains(&images), "{images}");
    }
}

#[test]
fn tier_temperatures_follow_config() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|_, _, _| None);
    let mut cfg = house_config(dir.path());
    cfg.iterations = 2;
    cfg.temperatures.judge = 0.11;
    cfg.temperatures.replan = 0.22;
    cfg.temperatures.order = 0.33;
    cfg.temperatures.position = 0.44;
    cfg.temperatures.selector = 0.05;
    let inv = house_inventory();
    let p = Pipeline::new(&cfg, &inv, &gw).unwrap();
    let log = p.run_iterations().unwrap();
    p.select(&log).unwrap();
    for (tag, req) in calls.lock().unwrap().iter() {
        let want = match tag.split('/').next().unwrap() {
            "judge" => 0.11,
            "replan" => 0.22,
            "order" => 0.33,
            "position" => 0.44,
            "select" => 0.05,
            other => panic!("unexpected tier {other}"),
        };
        assert_eq!(req.temperature, want, "{tag}");
    }
}

#[test]
fn defaults_match_tier_contract() {
    let t = idfra::orchestrator::Temperatures::default();
    assert_eq!((t.judge, t.replan, t.order, t.position, t.selector), (0.4, 0.5, 0.5, 0.25, 0.0));
}

#[test]
fn replan_history_embeds_prior_plans() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|_, _, _| None);
    let mut cfg = house_config(dir.path());
    cfg.iterations = 4;
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let text = request_text(&request(&calls, "replan/3"));
    let history = fenced_json(&text)
        .into_iter()
        .find(|v| v.as_array().is_some_and(|a| a.first().is_some_and(|p| p.get("iteration").is_some())))
        .expect("history block");
    let plans = history.as_array().unwrap();
    assert_eq!(plans.len(), 3);
    for (i, p) in plans.iter().enumerate() {
        assert_eq!(p, &log.iterations[i].plan.to_value());
    }
    let first = request_text(&request(&calls, "replan/0"));
    assert!(first.contains(idfra::orchestrator::INITIAL_INSTRUCTION));
    assert!(text.contains(idfra::orchestrator::REVISE_INSTRUCTION));
    let feedback: Value = fenced_json(&text).into_iter().find(|v| v.get("semantic_assessment").is_some()).unwrap();
    assert_eq!(feedback, serde_json::from_str::<Value>(&log.iterations[2].judge.to_json()).unwrap());
}

fn push_out_of_region(text: &str) -> String {
    let mut v = extract_json(text).unwrap();
    v["blocks"][0]["position"][0] = 0.45.into();
    serde_json::to_string(&v).unwrap()
}

#[test]
fn position_violation_gets_one_corrective_retry() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|tag, req, stub| {
        (tag == "position/0").then(|| Ok(push_out_of_region(&stub.respond(tag, req).unwrap())))
    });
    let cfg = one_iteration(dir.path());
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let retry = request(&calls, "position/0/retry");
    let n = retry.messages.len();
    assert_eq!(retry.messages[n - 2].role, Role::Assistant);
    let correction = retry.messages[n - 1].text();
    assert!(correction.contains("violates the workspace constraints"), "{correction}");
    assert!(correction.contains("block 0: footprint extends outside the assembly region"), "{correction}");
    let r = &log.iterations[0];
    assert!(!r.has(Flag::PositionViolations));
    assert!(r.violations.is_empty());
    assert!(r.plan.blocks[0].pose.position[0].abs() < 0.2);
}

#[test]
fn persistent_violation_is_flagged_and_executed() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, _) = stub_with(|tag, req, stub| {
        tag.starts_with("position/0").then(|| Ok(push_out_of_region(&stub.respond("position/0", req).unwrap())))
    });
    let cfg = one_iteration(dir.path());
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let r = &log.iterations[0];
    assert!(r.has(Flag::PositionViolations));
    assert!(!r.violations.is_empty());
    assert!(r.has(Flag::ExecutionFailed) || r.stable_fraction < 1.0);
}

#[test]
fn order_dropping_a_block_is_retried_then_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = stub_with(|tag, req, stub| {
        tag.starts_with("order/").then(|| {
            let mut v = extract_json(&stub.respond("order/0", req).unwrap()).unwrap();
            v["blocks"].as_array_mut().unwrap().pop();
            Ok(v.to_string())
        })
    });
    let cfg = one_iteration(dir.path());
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let r = &log.iterations[0];
    assert!(r.has(Flag::OrderFailed));
    assert_eq!(r.calls, vec!["replan/0", "order/0", "order/0/retry", "position/0", "judge/0"]);
    let position_text = request_text(&request(&calls, "position/0"));
    let replan_req = request(&calls, "replan/0");
    let high = HighLevelPlan::from_value(extract_json(&StubDesigner::new("house").respond("replan/0", &replan_req).unwrap()).unwrap()).unwrap();
    assert!(position_text.contains(&high.to_json()));
    assert!(!r.plan.blocks.is_empty());
}

#[test]
fn judge_failure_is_flagged_and_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, _) = stub_with(|tag, _, _| tag.starts_with("judge/1").then(|| Ok("I cannot judge this.".into())));
    let mut cfg = house_config(dir.path());
    cfg.iterations = 3;
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    assert!(log.iterations[1].has(Flag::JudgeFailed));
    assert!(log.iterations[1].calls.contains(&"judge/1/retry".to_string()));
    assert!(!log.iterations[2].has(Flag::JudgeFailed));
    assert_eq!(log.iterations.len(), 3);
}

#[test]
fn replan_failure_carries_previous_plan_forward() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, _) = stub_with(|tag, _, _| tag.starts_with("replan/2").then(|| Ok("{\"blocks\": []}".into())));
    let mut cfg = house_config(dir.path());
    cfg.iterations = 3;
    let log = Pipeline::new(&cfg, &house_inventory(), &gw).unwrap().run_iterations().unwrap();
    let r = &log.iterations[2];
    assert!(r.has(Flag::ReplanFailed) && r.has(Flag::CarriedForward));
    assert_eq!(r.plan.blocks, log.iterations[1].plan.blocks);
    assert_eq!(r.plan.iteration, 2);
    assert!(r.calls.contains(&"judge/2".to_string()));
}

#[test]
fn iteration_zero_failure_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, _) = stub_with(|tag, _, _| tag.starts_with("replan/0").then(|| Ok("no".into())));
    let err = run(&one_iteration(dir.path()), &house_inventory(), &gw).unwrap_err();
    assert!(matches!(err, OrchestratorError::Aborted { iteration: 0, .. }), "{err}");
}

#[test]
fn all_missing_designs_leave_no_winner() {
    let dir = tempfile::tempdir().unwrap();
    let gw = idfra::gateway::Gateway::scripted(StubDesigner::all_missing("house"));
    let mut cfg = house_config(dir.path());
    cfg.iterations = 3;
    let err = run(&cfg, &house_inventory(), &gw).unwrap_err();
    assert!(matches!(err, OrchestratorError::NoQualifiedDesign));
    assert_eq!(err.to_string(), "no qualified design");
    let log = RunLog::load(&dir.path().join("house-s0")).unwrap();
    let sel = log.selection.unwrap();
    assert!(sel.qualified.is_empty() && sel.winner.is_none() && sel.calls.is_empty());
    assert!(log.iterations.iter().all(|r| r.has(Flag::MissingBlocks)));
}

#[test]
fn empty_inventory_is_rejected_before_any_call() {
    let (gw, calls) = stub_with(|_, _, _| None);
    let inv = idfra::model::parse_inventory("[]").unwrap();
    let cfg = house_config(std::path::Path::new("unused"));
    assert!(Pipeline::new(&cfg, &inv, &gw).is_err());
    assert!(calls.lock().unwrap().is_empty());
}

#[test]
fn rerun_replaces_previous_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = house_config(dir.path());
    run(&cfg, &house_inventory(), &golden_replay()).unwrap();
    std::fs::write(dir.path().join("house-s0/stale.txt"), "x").unwrap();
    run(&cfg, &house_inventory(), &golden_replay()).unwrap();
    assert!(!dir.path().join("house-s0/stale.txt").exists());
}
