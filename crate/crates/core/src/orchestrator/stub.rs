//! Deterministic offline designer.
//!
//! Answers every call tag of the pipeline without a network: a scripted
//! house that alternates features between iterations, topples once, and asks
//! for an unavailable block once. Each response depends only on the tag and
//! the request text, so a recorded transcript replays exactly.

use serde_json::{json, Value};

use crate::gateway::{fenced_json, ChatRequest, GatewayError, Role, ScriptedModel};
use crate::model::{canonical_f64, Shape};

use super::tiers::HighLevelPlan;

/// Inventory the scripted designs are drawn from.
pub const HOUSE_INVENTORY: &str = r#"[
  {"shape": "cuboid", "dims": [0.04, 0.04, 0.04], "quantity": 4},
  {"shape": "cuboid", "dims": [0.12, 0.04, 0.02], "quantity": 3},
  {"shape": "cuboid", "dims": [0.06, 0.02, 0.02], "quantity": 2},
  {"shape": "cylinder", "dims": [0.02, 0.02, 0.04], "quantity": 2}
]"#;

struct Part {
    name: &'static str,
    color: &'static str,
    shape: Shape,
    dims: [f64; 3],
    placement: &'static str,
    position: [f64; 3],
    yaw: f64,
}

const fn cuboid(name: &'static str, color: &'static str, dims: [f64; 3], placement: &'static str, position: [f64; 3]) -> Part {
    Part { name, color, shape: Shape::Cuboid, dims, placement, position, yaw: 0.0 }
}

const LEFT_WALL: Part = cuboid("left_wall", "white", [0.04, 0.04, 0.04], "on the table", [-0.04, 0.0, 0.02]);
const RIGHT_WALL: Part = cuboid("right_wall", "white", [0.04, 0.04, 0.04], "on the table", [0.04, 0.0, 0.02]);
const LINTEL: Part = cuboid("lintel", "brown", [0.12, 0.04, 0.02], "on top of left_wall and right_wall", [0.0, 0.0, 0.05]);
const ROOF: Part = cuboid("roof", "red", [0.12, 0.04, 0.02], "on top of lintel", [0.0, 0.0, 0.07]);
// Dimension switched: the 0.06 x 0.02 x 0.02 bar stood on end.
const CHIMNEY: Part = cuboid("chimney", "gray", [0.02, 0.02, 0.06], "on top of roof", [0.03, 0.0, 0.11]);
const AWNING: Part = cuboid("awning", "orange", [0.12, 0.04, 0.02], "on top of roof, sticking out to the right", [0.09, 0.0, 0.09]);
const PORCH_LEFT: Part = Part {
    name: "porch_post_left",
    color: "yellow",
    shape: Shape::Cylinder,
    dims: [0.02, 0.02, 0.04],
    placement: "on the table in front of left_wall",
    position: [-0.04, -0.05, 0.02],
    yaw: 0.0,
};
const PORCH_RIGHT: Part = Part {
    name: "porch_post_right",
    color: "yellow",
    shape: Shape::Cylinder,
    dims: [0.02, 0.02, 0.04],
    placement: "on the table in front of right_wall",
    position: [0.04, -0.05, 0.02],
    yaw: 0.0,
};
const PORCH_ROOF: Part = cuboid("porch_roof", "red", [0.12, 0.04, 0.02], "on top of porch_post_left and porch_post_right", [0.0, -0.05, 0.05]);
const DOOR_STEP: Part = cuboid("door_step", "brown", [0.06, 0.02, 0.02], "on the table in front of the door", [0.0, -0.04, 0.01]);
// Not in the inventory.
const DOOR: Part = cuboid("door", "blue", [0.03, 0.01, 0.05], "on the table between the walls", [0.0, 0.025, 0.025]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    Chimney,
    Porch,
    Awning,
    Door,
}

/// Scripted designer. `all_missing` makes every design ask for a block that
/// is not available.
#[derive(Debug, Clone)]
pub struct StubDesigner {
    pub target: String,
    pub all_missing: bool,
}

impl StubDesigner {
    pub fn new(target: impl Into<String>) -> Self {
        Self { target: target.into(), all_missing: false }
    }

    pub fn all_missing(target: impl Into<String>) -> Self {
        Self { target: target.into(), all_missing: true }
    }

    fn features(&self, iteration: u32) -> Vec<Feature> {
        let mut f = match iteration {
            3 => vec![Feature::Awning],
            5 => vec![Feature::Porch, Feature::Door],
            i if i % 2 == 0 => vec![Feature::Chimney],
            _ => vec![Feature::Porch],
        };
        if self.all_missing && !f.contains(&Feature::Door) {
            f.push(Feature::Door);
        }
        f
    }

    /// Bottom-up design for an iteration.
    fn design(&self, iteration: u32) -> Vec<&'static Part> {
        let mut parts: Vec<&'static Part> = vec![&LEFT_WALL, &RIGHT_WALL, &LINTEL, &ROOF];
        let features = self.features(iteration);
        for f in &features {
            match f {
                Feature::Chimney => parts.push(&CHIMNEY),
                Feature::Awning => parts.push(&AWNING),
                Feature::Porch => parts.extend([&PORCH_LEFT, &PORCH_RIGHT, &PORCH_ROOF]),
                Feature::Door => parts.push(&DOOR),
            }
        }
        if iteration >= 6 && !features.contains(&Feature::Porch) {
            parts.push(&DOOR_STEP);
        }
        parts
    }

    fn level(&self, iteration: u32, name: &str) -> f64 {
        self.design(iteration)
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.position[2] - p.dims[2] / 2.0)
            .unwrap_or(f64::MAX)
    }

    fn replan(&self, iteration: u32) -> Value {
        // Listed roof first, the way a designer describes it; Order fixes it.
        let blocks: Vec<Value> = self
            .design(iteration)
            .iter()
            .rev()
            .map(|p| json!({"name": p.name, "color": p.color, "shape": p.shape, "dims": p.dims, "placement": p.placement}))
            .collect();
        json!({ "blocks": blocks })
    }

    fn order(&self, iteration: u32, req: &ChatRequest) -> Result<Value, GatewayError> {
        let mut plan = embedded_high_level(req)?;
        plan.blocks.sort_by(|a, b| self.level(iteration, &a.name).total_cmp(&self.level(iteration, &b.name)));
        Ok(serde_json::to_value(plan).expect("plan serializes"))
    }

    fn position(&self, iteration: u32, req: &ChatRequest) -> Result<Value, GatewayError> {
        let plan = embedded_high_level(req)?;
        let design = self.design(iteration);
        let blocks: Vec<Value> = plan
            .blocks
            .iter()
            .map(|b| {
                let (position, yaw) = design
                    .iter()
                    .find(|p| p.name == b.name)
                    .map_or(([0.0, 0.0, 0.3], 0.0), |p| (p.position, p.yaw));
                json!({
                    "name": b.name,
                    "color": b.color,
                    "shape": b.shape,
                    "dims": b.dims.map(canonical_f64),
                    "position": position,
                    "yaw": yaw,
                })
            })
            .collect();
        Ok(json!({"target": self.target, "iteration": iteration, "blocks": blocks}))
    }

    fn judge(&self, iteration: u32, req: &ChatRequest) -> Value {
        let features = self.features(iteration);
        let missing: Vec<String> = last_user_json(req)
            .into_iter()
            .filter_map(|v| v.as_array().cloned())
            .flatten()
            .filter(|m| m.get("plan_index").is_some())
            .filter_map(|m| {
                let shape = m.get("shape")?.as_str()?.to_string();
                let dims: Vec<String> = m.get("dims")?.as_array()?.iter().filter_map(|d| d.as_f64()).map(|d| d.to_string()).collect();
                Some(format!("{shape} {}", dims.join("x")))
            })
            .collect();
        let availability: Vec<Value> = if missing.is_empty() {
            Vec::new()
        } else {
            vec![json!({
                "feature": "door",
                "blocks_involved": missing,
                "quantity_mismatch": missing.len(),
                "instruction": "no such block is available; drop the door or build the opening from available blocks",
            })]
        };
        let toppled = features.contains(&Feature::Awning);
        let mut suggestions = Vec::new();
        if features.contains(&Feature::Chimney) {
            suggestions.push(json!({"kind": "remove_feature", "detail": "chimney"}));
        } else {
            suggestions.push(json!({"kind": "add_feature", "detail": "chimney"}));
        }
        if toppled {
            suggestions.push(json!({"kind": "adjust_position", "detail": "move the awning back over the roof or drop it"}));
        }
        if features.contains(&Feature::Door) {
            suggestions.push(json!({"kind": "remove_feature", "detail": "door"}));
        }
        let score = (4 + iteration / 2).min(9) - if toppled { 2 } else { 0 };
        json!({
            "availability": availability,
            "stability_risk": {
                "affected": toppled,
                "detail": if toppled { "the awning overhangs the roof and falls" } else { "every block rests on its support" },
            },
            "semantic_assessment": {
                "resembles_target": score >= 5,
                "score_0_10": score,
                "rationale": "two walls under a flat roof",
            },
            "suggestions": suggestions,
        })
    }

    fn rank(&self, req: &ChatRequest) -> Value {
        let mut candidates: Vec<String> = last_user_json(req)
            .into_iter()
            .find_map(|v| serde_json::from_value::<Vec<String>>(v).ok())
            .unwrap_or_default();
        if let Some(i) = candidates.iter().position(|c| c == &self.target) {
            let t = candidates.remove(i);
            candidates.insert(0, t);
        }
        json!(candidates)
    }
}

fn tag_iteration(tag: &str) -> u32 {
    tag.split('/').nth(1).and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn last_user_json(req: &ChatRequest) -> Vec<Value> {
    req.messages
        .iter()
        .filter(|m| m.role == Role::User)
        .take(1)
        .flat_map(|m| fenced_json(&m.text()))
        .collect()
}

fn embedded_high_level(req: &ChatRequest) -> Result<HighLevelPlan, GatewayError> {
    last_user_json(req)
        .into_iter()
        .find_map(|v| HighLevelPlan::from_value(v).ok())
        .ok_or_else(|| GatewayError::Model("stub: request carries no high-level plan".into()))
}

impl ScriptedModel for StubDesigner {
    fn respond(&self, tag: &str, req: &ChatRequest) -> Result<String, GatewayError> {
        let i = tag_iteration(tag);
        let tier = tag.split('/').next().unwrap_or("");
        let value = match tier {
            "replan" => self.replan(i),
            "order" => self.order(i, req)?,
            "position" => self.position(i, req)?,
            "judge" => self.judge(i, req),
            "select" | "compare" => return Ok("A".into()),
            "rank" => self.rank(req),
            _ => return Err(GatewayError::Model(format!("stub: unknown call tag {tag:?}"))),
        };
        Ok(serde_json::to_string_pretty(&value).expect("value serializes"))
    }
}
