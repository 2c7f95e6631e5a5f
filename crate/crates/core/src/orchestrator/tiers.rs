use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{canonical_f64, check_dims, ser_triple, Color, Shape};

/// Replan output: what to build and what each block rests on, without
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelBlock {
    pub name: String,
    pub color: Color,
    pub shape: Shape,
    #[serde(serialize_with = "ser_triple")]
    pub dims: [f64; 3],
    pub placement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelPlan {
    pub blocks: Vec<HighLevelBlock>,
}

impl HighLevelPlan {
    pub fn from_value(value: Value) -> Result<Self, String> {
        let plan: HighLevelPlan = serde_json::from_value(value).map_err(|e| e.to_string())?;
        for (i, b) in plan.blocks.iter().enumerate() {
            check_dims(b.shape, b.dims, true).map_err(|r| format!("block {i}: {r}"))?;
            if b.placement.trim().is_empty() {
                return Err(format!("block {i} ({}) has no placement anchor", b.name));
            }
        }
        if plan.blocks.is_empty() {
            return Err("plan has no blocks".into());
        }
        Ok(plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Whether `other` holds exactly the same blocks, in any order.
    pub fn is_permutation_of(&self, other: &HighLevelPlan) -> bool {
        fn keys(p: &HighLevelPlan) -> Vec<String> {
            let mut k: Vec<String> = p
                .blocks
                .iter()
                .map(|b| {
                    let d = b.dims.map(canonical_f64);
                    format!("{}|{:?}|{}|{:?}|{}", b.name, b.color, b.shape, d, b.placement)
                })
                .collect();
            k.sort();
            k
        }
        keys(self) == keys(other)
    }
}
