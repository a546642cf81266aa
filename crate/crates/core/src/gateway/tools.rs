//! Evidence retrieval tools (web search, literature search, guideline store).
//!
//! Offline mode answers from a fixture mapping keyed by normalized query;
//! live mode calls one HTTP endpoint per tool.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolKind {
    WebSearch,
    LiteratureSearch,
    GuidelineStore,
}

impl ToolKind {
    pub const ALL: [ToolKind; 3] = [
        ToolKind::WebSearch,
        ToolKind::LiteratureSearch,
        ToolKind::GuidelineStore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::WebSearch => "web-search",
            ToolKind::LiteratureSearch => "literature-search",
            ToolKind::GuidelineStore => "guideline-store",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A retrieved snippet with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub evidence_id: String,
    pub source: ToolKind,
    pub query: String,
    pub snippet: String,
    /// URL or fixture identifier.
    pub locator: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolMode {
    #[default]
    Offline,
    Live,
}

/// Lowercase, trimmed, internal whitespace collapsed to single spaces.
pub fn normalize_query(query: &str) -> String {
    query
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn evidence_id(tool: ToolKind, normalized: &str, index: usize) -> String {
    format!("ev-{}-{:016x}-{}", tool.as_str(), fnv1a(normalized.as_bytes()), index)
}

pub trait ToolProvider: Send + Sync {
    fn mode(&self) -> ToolMode;

    fn query(&self, tool: ToolKind, query: &str) -> Result<Vec<Evidence>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureHit {
    pub snippet: String,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub tool: ToolKind,
    pub query: String,
    pub hits: Vec<FixtureHit>,
}

/// Offline tool provider backed by a fixture mapping.
#[derive(Debug, Clone, Default)]
pub struct FixtureTools {
    map: HashMap<(ToolKind, String), Vec<FixtureHit>>,
}

impl FixtureTools {
    pub fn from_entries(entries: Vec<FixtureEntry>) -> Self {
        let mut map: HashMap<(ToolKind, String), Vec<FixtureHit>> = HashMap::new();
        for entry in entries {
            map.entry((entry.tool, normalize_query(&entry.query)))
                .or_default()
                .extend(entry.hits);
        }
        FixtureTools { map }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<FixtureEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, e.line(), e.to_string()))?;
        Ok(Self::from_entries(entries))
    }
}

impl ToolProvider for FixtureTools {
    fn mode(&self) -> ToolMode {
        ToolMode::Offline
    }

    fn query(&self, tool: ToolKind, query: &str) -> Result<Vec<Evidence>> {
        let normalized = normalize_query(query);
        let hits = match self.map.get(&(tool, normalized.clone())) {
            Some(h) => h,
            None => return Ok(Vec::new()),
        };
        Ok(hits
            .iter()
            .enumerate()
            .map(|(i, h)| Evidence {
                evidence_id: evidence_id(tool, &normalized, i),
                source: tool,
                query: normalized.clone(),
                snippet: h.snippet.clone(),
                locator: h.locator.clone(),
            })
            .collect())
    }
}

/// Live provider: `GET {endpoint}?q=<query>` returning `[{snippet, locator}]`.
pub struct HttpTools {
    client: reqwest::blocking::Client,
    endpoints: BTreeMap<ToolKind, String>,
}

impl HttpTools {
    pub fn new(endpoints: BTreeMap<ToolKind, String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpTools { client, endpoints })
    }
}

impl ToolProvider for HttpTools {
    fn mode(&self) -> ToolMode {
        ToolMode::Live
    }

    fn query(&self, tool: ToolKind, query: &str) -> Result<Vec<Evidence>> {
        let base = self
            .endpoints
            .get(&tool)
            .ok_or_else(|| Error::Config(format!("no endpoint configured for {tool}")))?;
        let url = reqwest::Url::parse_with_params(base, &[("q", query)])
            .map_err(|e| Error::Config(format!("bad endpoint for {tool}: {e}")))?;
        let response = self
            .client
            .get(url)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(Error::Transport(format!("{tool}: HTTP {}", response.status())));
        }
        let hits: Vec<FixtureHit> = response.json().map_err(|e| Error::Transport(e.to_string()))?;
        let normalized = normalize_query(query);
        Ok(hits
            .into_iter()
            .enumerate()
            .map(|(i, h)| Evidence {
                evidence_id: evidence_id(tool, &normalized, i),
                source: tool,
                query: normalized.clone(),
                snippet: h.snippet,
                locator: h.locator,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsConfig {
    #[serde(default)]
    pub mode: ToolMode,
    #[serde(default)]
    pub fixtures_path: Option<PathBuf>,
    #[serde(default = "all_tools")]
    pub enabled: Vec<ToolKind>,
    #[serde(default = "default_max_evidence")]
    pub max_evidence: usize,
    #[serde(default)]
    pub endpoints: BTreeMap<ToolKind, String>,
}

fn all_tools() -> Vec<ToolKind> {
    ToolKind::ALL.to_vec()
}

fn default_max_evidence() -> usize {
    2
}

impl Default for ToolsConfig {
    fn default() -> Self {
        ToolsConfig {
            mode: ToolMode::Offline,
            fixtures_path: None,
            enabled: all_tools(),
            max_evidence: default_max_evidence(),
            endpoints: BTreeMap::new(),
        }
    }
}

impl ToolsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_evidence == 0 {
            return Err(Error::Config("tools.max_evidence must be at least 1".into()));
        }
        if self.mode == ToolMode::Live {
            if let Some(t) = self.enabled.iter().find(|t| !self.endpoints.contains_key(t)) {
                return Err(Error::Config(format!("tools.endpoints missing `{t}` for live mode")));
            }
        }
        Ok(())
    }

    /// Enabled tools in roster order, without duplicates.
    pub fn enabled_tools(&self) -> Vec<ToolKind> {
        ToolKind::ALL
            .into_iter()
            .filter(|t| self.enabled.contains(t))
            .collect()
    }

    pub fn build(&self) -> Result<Box<dyn ToolProvider>> {
        self.validate()?;
        match self.mode {
            ToolMode::Offline => match &self.fixtures_path {
                Some(p) => Ok(Box::new(FixtureTools::load(p)?)),
                None => Err(Error::Config("tools.fixtures_path is required in offline mode".into())),
            },
            ToolMode::Live => Ok(Box::new(HttpTools::new(self.endpoints.clone())?)),
        }
    }
}

/// Queries one tool in the provider's mode.
pub fn tool_query(provider: &dyn ToolProvider, tool: ToolKind, query: &str) -> Result<Vec<Evidence>> {
    provider.query(tool, query)
}
