use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{whitespace_tokens, BackendKind, Completion, ModelBackend};
use crate::error::{Error, Result};

/// A scripted response equal to this marker makes the call fail with a
/// backend error, so fixtures can exercise degraded paths.
pub const FAIL_MARKER: &str = "<fail>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsumptionPolicy {
    #[default]
    Cycle,
    Exhaust,
}

/// Canned responses for one stage, optionally restricted to prompts that
/// contain `key`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub policy: ConsumptionPolicy,
}

impl ScriptEntry {
    pub fn cycle(stage: &str, responses: &[&str]) -> Self {
        ScriptEntry {
            stage: stage.to_string(),
            key: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
            policy: ConsumptionPolicy::Cycle,
        }
    }

    pub fn exhaust(stage: &str, responses: &[&str]) -> Self {
        ScriptEntry {
            policy: ConsumptionPolicy::Exhaust,
            ..Self::cycle(stage, responses)
        }
    }

    pub fn keyed(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    fn matches(&self, stage: &str, prompt: &str) -> bool {
        self.stage == stage && self.key.as_deref().is_none_or(|k| prompt.contains(k))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Self {
        Script { entries }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: Script = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, e.line(), e.to_string()))?;
        for (i, entry) in script.entries.iter().enumerate() {
            if entry.responses.is_empty() {
                return Err(Error::format(
                    path,
                    0,
                    format!("entry {i} (stage `{}`) has no responses", entry.stage),
                ));
            }
        }
        Ok(script)
    }

    /// Returns the stage tags from `required` that no entry covers.
    pub fn missing_stages<'a>(&self, required: &[&'a str]) -> Vec<&'a str> {
        required
            .iter()
            .copied()
            .filter(|s| !self.entries.iter().any(|e| e.stage == *s))
            .collect()
    }
}

#[derive(Debug, Default)]
struct Cursors {
    next: Vec<usize>,
    calls: BTreeMap<String, u64>,
}

/// Deterministic backend that replays a [`Script`].
///
/// Keyed entries whose key occurs in the prompt win over keyless entries;
/// within each group the first entry in script order is used. Cursor
/// advancement is serialized, so the response sequence depends only on the
/// order of calls.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    cursors: Mutex<Cursors>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let n = script.entries.len();
        ScriptedBackend {
            script,
            cursors: Mutex::new(Cursors {
                next: vec![0; n],
                calls: BTreeMap::new(),
            }),
        }
    }

    /// Number of calls made for `stage` so far.
    pub fn calls(&self, stage: &str) -> u64 {
        self.cursors.lock().unwrap().calls.get(stage).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> u64 {
        self.cursors.lock().unwrap().calls.values().sum()
    }

    fn select(&self, stage: &str, prompt: &str) -> Option<usize> {
        let entries = &self.script.entries;
        entries
            .iter()
            .position(|e| e.key.is_some() && e.matches(stage, prompt))
            .or_else(|| entries.iter().position(|e| e.key.is_none() && e.matches(stage, prompt)))
    }
}

impl ModelBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, stage: &str, prompt: &str) -> Result<Completion> {
        let mut cursors = self.cursors.lock().unwrap();
        *cursors.calls.entry(stage.to_string()).or_default() += 1;

        let idx = self.select(stage, prompt).ok_or_else(|| Error::ScriptExhausted {
            stage: stage.to_string(),
            reason: "no script entry matches this stage".into(),
        })?;
        let entry = &self.script.entries[idx];
        let pos = cursors.next[idx];
        let text = match entry.policy {
            ConsumptionPolicy::Cycle => &entry.responses[pos % entry.responses.len()],
            ConsumptionPolicy::Exhaust => entry.responses.get(pos).ok_or_else(|| {
                Error::ScriptExhausted {
                    stage: stage.to_string(),
                    reason: format!("all {} responses consumed", entry.responses.len()),
                }
            })?,
        };
        cursors.next[idx] = pos + 1;

        if text == FAIL_MARKER {
            return Err(Error::backend(stage, "scripted failure"));
        }
        Ok(Completion {
            text: text.clone(),
            input_tokens: whitespace_tokens(prompt),
            output_tokens: whitespace_tokens(text),
        })
    }
}
