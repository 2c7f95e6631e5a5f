//! Prompt templates.
//!
//! Each template is a text asset with a `=== system ===` section and a
//! `=== user ===` section. `{key}` placeholders are substituted; any other
//! brace text is left alone, so templates may show literal JSON.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {name}: {reason}")]
    Malformed { name: String, reason: String },
    #[error("template {name}: {source}")]
    Io { name: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

const SYSTEM_MARK: &str = "=== system ===";
const USER_MARK: &str = "=== user ===";

impl PromptTemplate {
    pub fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let malformed = |reason: &str| PromptError::Malformed { name: name.into(), reason: reason.into() };
        let s = text.find(SYSTEM_MARK).ok_or_else(|| malformed("no system section"))?;
        let u = text.find(USER_MARK).ok_or_else(|| malformed("no user section"))?;
        if u < s {
            return Err(malformed("user section precedes system section"));
        }
        Ok(Self {
            system: text[s + SYSTEM_MARK.len()..u].trim().to_string(),
            user: text[u + USER_MARK.len()..].trim().to_string(),
        })
    }

    pub fn system(&self, vars: &[(&str, &str)]) -> String {
        fill(&self.system, vars)
    }

    pub fn user(&self, vars: &[(&str, &str)]) -> String {
        fill(&self.user, vars)
    }
}

/// Replaces each `{key}` with its value in a single left-to-right pass.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (k, v) in vars {
            let key_len = k.len() + 2;
            if tail.as_bytes().get(key_len - 1) == Some(&b'}') && tail.get(1..key_len - 1) == Some(*k) {
                out.push_str(v);
                rest = &tail[key_len..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Every template the pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub judge: PromptTemplate,
    pub replan: PromptTemplate,
    pub order: PromptTemplate,
    pub position: PromptTemplate,
    pub select: PromptTemplate,
    pub rank: PromptTemplate,
    pub compare: PromptTemplate,
}

const BUILTIN: [(&str, &str); 7] = [
    ("judge", include_str!("../assets/prompts/judge.txt")),
    ("replan", include_str!("../assets/prompts/replan.txt")),
    ("order", include_str!("../assets/prompts/order.txt")),
    ("position", include_str!("../assets/prompts/position.txt")),
    ("select", include_str!("../assets/prompts/select.txt")),
    ("rank", include_str!("../assets/prompts/rank.txt")),
    ("compare", include_str!("../assets/prompts/compare.txt")),
];

impl PromptSet {
    pub fn builtin() -> Self {
        Self::load(None).expect("bundled templates parse")
    }

    /// Bundled templates, with `<dir>/<name>.txt` taking precedence when present.
    pub fn load(dir: Option<&Path>) -> Result<Self, PromptError> {
        let mut parsed = Vec::with_capacity(BUILTIN.len());
        for (name, text) in BUILTIN {
            let custom = dir.map(|d| d.join(format!("{name}.txt"))).filter(|p| p.is_file());
            let template = match custom {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|source| PromptError::Io { name: name.into(), source })?;
                    PromptTemplate::parse(name, &text)?
                }
                None => PromptTemplate::parse(name, text)?,
            };
            parsed.push(template);
        }
        let mut it = parsed.into_iter();
        let mut next = || it.next().expect("seven templates");
        Ok(Self {
            judge: next(),
            replan: next(),
            order: next(),
            position: next(),
            select: next(),
            rank: next(),
            compare: next(),
        })
    }
}
