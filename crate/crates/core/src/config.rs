//! Engine configuration, read from TOML and validated before use.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::AgentSettings;
use crate::error::{Error, Result};
use crate::gateway::tools::ToolsConfig;
use crate::gateway::BackendConfig;
use crate::memory::EmbedderConfig;
use crate::planner::PlannerConfig;

/// The four ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Plan in one backend call instead of beam search.
    Planner,
    /// Replace similarity retrieval with truncated full-record context.
    Memory,
    /// One generic agent instead of specialty departments.
    Departments,
    /// Concatenate outputs under one heading instead of task templates.
    Aggregation,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Planner,
        Ablation::Memory,
        Ablation::Departments,
        Ablation::Aggregation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Planner => "planner",
            Ablation::Memory => "memory",
            Ablation::Departments => "departments",
            Ablation::Aggregation => "aggregation",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown ablation `{s}` (expected planner, memory, departments or aggregation)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub planner: bool,
    pub memory: bool,
    pub departments: bool,
    pub aggregation: bool,
}

impl AblationFlags {
    pub fn from_list(list: &[Ablation]) -> Self {
        let mut flags = AblationFlags::default();
        for a in list {
            flags.set(*a);
        }
        flags
    }

    pub fn set(&mut self, a: Ablation) {
        match a {
            Ablation::Planner => self.planner = true,
            Ablation::Memory => self.memory = true,
            Ablation::Departments => self.departments = true,
            Ablation::Aggregation => self.aggregation = true,
        }
    }

    pub fn enabled(&self) -> Vec<Ablation> {
        Ablation::ALL
            .into_iter()
            .filter(|a| match a {
                Ablation::Planner => self.planner,
                Ablation::Memory => self.memory,
                Ablation::Departments => self.departments,
                Ablation::Aggregation => self.aggregation,
            })
            .collect()
    }
}

/// Agent tunables as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    /// Exemplar similarity threshold.
    pub delta: f64,
    pub max_cases: usize,
    pub k_max: usize,
    /// Lab agent runs at the first step and at steps mentioning one of these.
    pub lab_keywords: Vec<String>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            delta: 0.60,
            max_cases: 3,
            k_max: 5,
            lab_keywords: ["lab", "labs", "laboratory", "blood", "coagulation", "electrolyte", "panel"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Corpus directory or persisted store document.
    pub corpus: Option<PathBuf>,
    /// Where session documents are written; in-memory only when absent.
    pub sessions_dir: Option<PathBuf>,
    pub planner: PlannerConfig,
    pub agents: AgentsConfig,
    pub backend: BackendConfig,
    pub tools: ToolsConfig,
    pub embedder: EmbedderConfig,
    pub ablation: AblationFlags,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl EngineConfig {
    /// Parses and validates a TOML document. Relative paths stay as written.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: EngineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: EngineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.corpus);
        resolve(base, &mut config.sessions_dir);
        resolve(base, &mut config.backend.script);
        resolve(base, &mut config.tools.fixtures_path);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        let a = &self.agents;
        if !(-1.0..=1.0).contains(&a.delta) {
            return Err(Error::Config(format!("agents.delta {} outside [-1, 1]", a.delta)));
        }
        if a.k_max == 0 {
            return Err(Error::Config("agents.k_max must be at least 1".into()));
        }
        if a.max_cases == 0 {
            return Err(Error::Config("agents.max_cases must be at least 1".into()));
        }
        self.backend.validate()?;
        self.tools.validate()?;
        if let EmbedderConfig::Hash { dim: 0 } = self.embedder {
            return Err(Error::Config("embedder.dim must be positive".into()));
        }
        Ok(())
    }

    pub fn agent_settings(&self) -> AgentSettings {
        AgentSettings {
            threshold: self.agents.delta,
            max_cases: self.agents.max_cases,
            k_max: self.agents.k_max,
            max_evidence: self.tools.max_evidence,
            enabled_tools: self.tools.enabled_tools(),
            memory_ablated: self.ablation.memory,
        }
    }
}
