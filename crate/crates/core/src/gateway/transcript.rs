use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One completed call as recorded in `transcript.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub tag: String,
    pub digest: String,
    pub response: String,
}

impl TranscriptRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Recorded responses keyed by call tag.
#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    records: BTreeMap<String, TranscriptRecord>,
}

impl ReplayStore {
    pub fn from_records(records: Vec<TranscriptRecord>) -> Result<Self, GatewayError> {
        let mut map = BTreeMap::new();
        for r in records {
            let tag = r.tag.clone();
            if map.insert(tag.clone(), r).is_some() {
                return Err(GatewayError::Transcript(format!("tag {tag:?} recorded twice")));
            }
        }
        Ok(Self { records: map })
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: TranscriptRecord = serde_json::from_str(line)
                .map_err(|e| GatewayError::Transcript(format!("line {}: {e}", n + 1)))?;
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, tag: &str, digest: &str) -> Result<String, GatewayError> {
        let r = self.records.get(tag).ok_or_else(|| GatewayError::ReplayMiss(tag.to_string()))?;
        if r.digest != digest {
            return Err(GatewayError::RequestDrift(tag.to_string()));
        }
        Ok(r.response.clone())
    }
}
