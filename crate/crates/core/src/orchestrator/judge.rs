use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityFinding {
    pub feature: String,
    pub blocks_involved: Vec<String>,
    #[serde(default)]
    pub quantity_mismatch: i64,
    #[serde(default)]
    pub instruction: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityRisk {
    pub affected: bool,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemanticAssessment {
    pub resembles_target: bool,
    pub score_0_10: f64,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    AdjustProportion,
    AdjustPosition,
    AddFeature,
    RemoveFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub kind: SuggestionKind,
    pub detail: String,
}

/// Four-part feedback on one executed attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub availability: Vec<AvailabilityFinding>,
    pub stability_risk: StabilityRisk,
    pub semantic_assessment: SemanticAssessment,
    pub suggestions: Vec<Suggestion>,
}

impl JudgeReport {
    /// Parses and checks a report against the schema rules. `missing` is the
    /// number of blocks the matcher could not assign.
    pub fn from_value(value: Value, missing: usize) -> Result<Self, String> {
        let report: JudgeReport = serde_json::from_value(value).map_err(|e| e.to_string())?;
        report.check(missing)?;
        Ok(report)
    }

    pub fn check(&self, missing: usize) -> Result<(), String> {
        let score = self.semantic_assessment.score_0_10;
        if !(0.0..=10.0).contains(&score) {
            return Err(format!("score_0_10 = {score} is outside [0, 10]"));
        }
        if let Some(i) = self.availability.iter().position(|a| a.blocks_involved.is_empty()) {
            return Err(format!("availability entry {i} names no block"));
        }
        if missing > 0 && self.availability.is_empty() {
            return Err(format!("{missing} blocks are missing but availability is empty"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn valid() -> Value {
        json!({
            "availability": [],
            "stability_risk": {"affected": false, "detail": "all blocks rest"},
            "semantic_assessment": {"resembles_target": true, "score_0_10": 6, "rationale": "walls and roof"},
            "suggestions": [{"kind": "remove_feature", "detail": "chimney"}]
        })
    }

    #[test]
    fn accepts_valid_report() {
        let r = JudgeReport::from_value(valid(), 0).unwrap();
        assert_eq!(r.suggestions[0].kind, SuggestionKind::RemoveFeature);
        assert_eq!(r.semantic_assessment.score_0_10, 6.0);
    }

    #[test]
    fn score_bounds() {
        let mut v = valid();
        v["semantic_assessment"]["score_0_10"] = json!(11);
        assert!(JudgeReport::from_value(v.clone(), 0).unwrap_err().contains("outside"));
        v["semantic_assessment"]["score_0_10"] = json!(10);
        assert!(JudgeReport::from_value(v, 0).is_ok());
    }

    #[test]
    fn missing_blocks_require_availability() {
        assert!(JudgeReport::from_value(valid(), 1).is_err());
        let mut v = valid();
        v["availability"] = json!([{"feature": "door", "blocks_involved": [], "quantity_mismatch": 1, "instruction": "drop it"}]);
        assert!(JudgeReport::from_value(v.clone(), 1).unwrap_err().contains("names no block"));
        v["availability"][0]["blocks_involved"] = json!(["cuboid 0.03x0.01x0.05"]);
        assert!(JudgeReport::from_value(v, 1).is_ok());
    }

    #[test]
    fn unknown_suggestion_kind_rejected() {
        let mut v = valid();
        v["suggestions"][0]["kind"] = json!("paint_it");
        assert!(JudgeReport::from_value(v, 0).is_err());
    }
}
