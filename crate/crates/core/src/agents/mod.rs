//! Department agents and the laboratory agent.
//!
//! Both read the immutable long-term store and write their outputs into the
//! session's working memory.

mod department;
mod lab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::gateway::tools::{ToolKind, ToolProvider};
use crate::gateway::Gateway;
use crate::memory::{Embedder, LongTermMemory, PatientProfile};
use crate::planner::{DepartmentId, TaskKind};

pub use crate::gateway::tools::Evidence;
pub use crate::memory::{LabItem, LabValue};
pub use department::{run_department_agent, AgentOutput, FULL_RECORD_TOKENS, MEMORY_WINDOW};
pub use lab::{
    identify_abnormal, retrieve_evidence, run_lab_agent, select_lab_items, EvidenceSet, LabAnalysis,
    LabRun, LabSelection,
};

/// Author of a working-memory entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Department(DepartmentId),
    Lab,
    /// Single non-specialized agent used when departments are disabled.
    Generic,
}

impl AgentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentId::Department(d) => d.as_str(),
            AgentId::Lab => "lab",
            AgentId::Generic => "generic",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lab" => Ok(AgentId::Lab),
            "generic" => Ok(AgentId::Generic),
            other => DepartmentId::ALL
                .iter()
                .find(|d| d.as_str() == other)
                .map(|d| AgentId::Department(*d))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown agent `{other}`"))),
        }
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tunables shared by the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    /// Exemplar similarity threshold.
    pub threshold: f64,
    pub max_cases: usize,
    pub k_max: usize,
    pub max_evidence: usize,
    pub enabled_tools: Vec<ToolKind>,
    /// Replace similarity retrieval with truncated full-record context.
    pub memory_ablated: bool,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            threshold: 0.60,
            max_cases: 3,
            k_max: 5,
            max_evidence: 2,
            enabled_tools: ToolKind::ALL.to_vec(),
            memory_ablated: false,
        }
    }
}

/// Everything an agent reads during one session.
pub struct AgentContext<'a> {
    pub patient: &'a PatientProfile,
    pub task: TaskKind,
    pub store: &'a LongTermMemory,
    pub gateway: &'a Gateway,
    pub embedder: &'a dyn Embedder,
    pub tools: &'a dyn ToolProvider,
    pub settings: &'a AgentSettings,
}
