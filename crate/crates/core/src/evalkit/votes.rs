use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use std::path::Path;

use super::{write_csv, EvalError};

/// One vote row as read: `assembly,voter,choice,mapping` where mapping is
/// `A=<method>;B=<method>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub assembly: String,
    pub voter: String,
    pub choice: String,
    pub mapping: String,
}

impl VoteRecord {
    /// Method the vote went to.
    fn resolve(&self) -> Result<(String, String), String> {
        let mut a = None;
        let mut b = None;
        for part in self.mapping.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("mapping part {part:?} lacks '='"))?;
            let v = v.trim();
            if v.is_empty() {
                return Err("empty method label".into());
            }
            let slot = match k.trim() {
                "A" => &mut a,
                "B" => &mut b,
                other => return Err(format!("unknown slot {other:?}")),
            };
            if slot.replace(v.to_string()).is_some() {
                return Err(format!("slot {} mapped twice", k.trim()));
            }
        }
        let (Some(a), Some(b)) = (a, b) else { return Err("mapping must cover A and B".into()) };
        if a == b {
            return Err("both slots map to the same method".into());
        }
        let (chosen, other) = match self.choice.trim() {
            "A" => (a, b),
            "B" => (b, a),
            c => return Err(format!("choice {c:?} is not A or B")),
        };
        if self.assembly.trim().is_empty() {
            return Err("empty assembly name".into());
        }
        Ok((chosen, other))
    }
}

pub fn load_votes(path: &Path) -> Result<Vec<VoteRecord>, EvalError> {
    parse_votes(&std::fs::read_to_string(path)?)
}

pub fn parse_votes(text: &str) -> Result<Vec<VoteRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("").to_string();
        out.push(VoteRecord { assembly: f(0), voter: f(1), choice: f(2), mapping: f(3) });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TallyReport {
    /// Votes per method for each assembly.
    pub per_assembly: BTreeMap<String, BTreeMap<String, u64>>,
    pub totals: BTreeMap<String, u64>,
    pub accepted: u64,
    pub rejects: u64,
}

impl TallyReport {
    /// Share of accepted votes that went to `method`, in percent.
    pub fn win_rate(&self, method: &str) -> Option<f64> {
        if self.accepted == 0 {
            return None;
        }
        Some(100.0 * *self.totals.get(method).unwrap_or(&0) as f64 / self.accepted as f64)
    }

    /// Assemblies where `method` received strictly more votes than any other.
    pub fn majority_wins(&self, method: &str) -> usize {
        self.per_assembly
            .values()
            .filter(|counts| {
                let mine = *counts.get(method).unwrap_or(&0);
                counts.iter().all(|(m, &c)| m == method || c < mine)
            })
            .count()
    }

    /// One row per method: votes, win rate and majority wins.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let rows: Vec<Vec<String>> = self
            .totals
            .iter()
            .map(|(m, v)| vec![m.clone(), v.to_string(), format_rate(self.win_rate(m)), self.majority_wins(m).to_string()])
            .collect();
        write_csv(path, &["method", "votes", "win_rate", "majority_wins"], &rows)
    }

    pub fn methods(&self) -> Vec<String> {
        self.totals.keys().cloned().collect()
    }
}

/// Resolves each presentation back to method labels and counts votes.
/// Malformed rows are skipped and counted as rejects.
pub fn tally_votes(records: &[VoteRecord]) -> TallyReport {
    let mut report = TallyReport::default();
    for (i, r) in records.iter().enumerate() {
        match r.resolve() {
            Ok((chosen, other)) => {
                let counts = report.per_assembly.entry(r.assembly.trim().to_string()).or_default();
                *counts.entry(chosen.clone()).or_default() += 1;
                counts.entry(other.clone()).or_default();
                *report.totals.entry(chosen).or_default() += 1;
                report.totals.entry(other).or_default();
                report.accepted += 1;
            }
            Err(e) => {
                log::warn!("vote row {}: {e}; skipped", i + 1);
                report.rejects += 1;
            }
        }
    }
    report
}

/// One decimal, or `n/a` when undefined.
pub fn format_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".to_string(), |r| format!("{r:.1}"))
}
