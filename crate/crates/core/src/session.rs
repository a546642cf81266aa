//! Session state, its phase machine, and on-disk persistence.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentOutput, LabRun};
use crate::aggregation::{AggregatedSummary, FinalOutput, ReflectedSummary};
use crate::config::AblationFlags;
use crate::error::{Error, Result};
use crate::gateway::TokenLedger;
use crate::memory::WorkingMemory;
use crate::planner::{Allocation, Plan, PlanStep, SearchTrace, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Planning,
    Executing,
    Aggregated,
    Reflected,
    AwaitingReview,
    Finalized,
    Failed,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Created,
        Phase::Planning,
        Phase::Executing,
        Phase::Aggregated,
        Phase::Reflected,
        Phase::AwaitingReview,
        Phase::Finalized,
        Phase::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Created => "created",
            Phase::Planning => "planning",
            Phase::Executing => "executing",
            Phase::Aggregated => "aggregated",
            Phase::Reflected => "reflected",
            Phase::AwaitingReview => "awaiting_review",
            Phase::Finalized => "finalized",
            Phase::Failed => "failed",
        }
    }

    /// The next phase on the main path.
    pub fn successor(self) -> Option<Phase> {
        match self {
            Phase::Created => Some(Phase::Planning),
            Phase::Planning => Some(Phase::Executing),
            Phase::Executing => Some(Phase::Aggregated),
            Phase::Aggregated => Some(Phase::Reflected),
            Phase::Reflected => Some(Phase::AwaitingReview),
            Phase::AwaitingReview => Some(Phase::Finalized),
            Phase::Finalized | Phase::Failed => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Finalized | Phase::Failed)
    }

    /// The declared transition graph: the main path, plus `failed` from
    /// every non-terminal phase.
    pub fn can_transition(self, to: Phase) -> bool {
        self.successor() == Some(to) || (to == Phase::Failed && !self.is_terminal())
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Phase,
    pub to: Phase,
    pub at: DateTime<Utc>,
}

/// What the agents produced for one plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: PlanStep,
    /// Absent when departments are ablated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Allocation>,
    pub agents: Vec<AgentOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab: Option<LabRun>,
}

/// One entry of the session journal. `refs` name the artifacts involved
/// (node ids, entry ids, record ids, section headings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: usize,
    pub phase: Phase,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    /// Phase the session was in when it failed.
    pub phase: Phase,
    pub message: String,
}

/// Everything known about one session; persisted as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub patient_id: String,
    pub task_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    pub phase: Phase,
    #[serde(default)]
    pub ablation: AblationFlags,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    /// Absent when the planner is ablated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SearchTrace>,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
    pub working: WorkingMemory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<AggregatedSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflected: Option<ReflectedSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<FinalOutput>,
    #[serde(default)]
    pub ledger: TokenLedger,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub events: Vec<SessionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReport>,
}

impl SessionState {
    pub fn new(
        session_id: impl Into<String>,
        patient_id: impl Into<String>,
        task_description: impl Into<String>,
        ablation: AblationFlags,
        now: DateTime<Utc>,
    ) -> Self {
        let session_id = session_id.into();
        SessionState {
            working: WorkingMemory::new(session_id.clone()),
            session_id,
            patient_id: patient_id.into(),
            task_description: task_description.into(),
            task: None,
            phase: Phase::Created,
            ablation,
            created_at: now,
            updated_at: now,
            plan: None,
            trace: None,
            steps: Vec::new(),
            summary: None,
            reflected: None,
            output: None,
            ledger: TokenLedger::default(),
            transitions: Vec::new(),
            events: Vec::new(),
            failure: None,
        }
    }

    /// Moves to `to` if the graph allows it.
    pub fn transition(&mut self, to: Phase, at: DateTime<Utc>) -> Result<()> {
        if !self.phase.can_transition(to) {
            return Err(Error::IllegalTransition(format!(
                "session `{}` cannot go from {} to {}",
                self.session_id, self.phase, to
            )));
        }
        self.transitions.push(Transition {
            from: self.phase,
            to,
            at,
        });
        self.phase = to;
        self.updated_at = at;
        Ok(())
    }

    pub fn fail(&mut self, message: impl Into<String>, at: DateTime<Utc>) -> Result<()> {
        let phase = self.phase;
        self.transition(Phase::Failed, at)?;
        self.failure = Some(FailureReport {
            phase,
            message: message.into(),
        });
        self.event("session.failed", Vec::new());
        Ok(())
    }

    pub fn event(&mut self, kind: &str, refs: Vec<String>) {
        self.events.push(SessionEvent {
            seq: self.events.len() + 1,
            phase: self.phase,
            kind: kind.to_string(),
            refs,
        });
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a SessionEvent> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Every transition in the history is on the declared graph and the
    /// history chains from `created` to the current phase.
    pub fn history_is_legal(&self) -> bool {
        let mut at = Phase::Created;
        for t in &self.transitions {
            if t.from != at || !t.from.can_transition(t.to) {
                return false;
            }
            at = t.to;
        }
        at == self.phase
    }
}

/// One JSON document per session in a directory.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.json"))
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// document.
    pub fn save(&self, state: &SessionState) -> Result<()> {
        let path = self.path_for(&state.session_id);
        let tmp = path.with_extension("json.tmp");
        let mut bytes = serde_json::to_vec_pretty(state)?;
        bytes.push(b'\n');
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SessionState> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }

    /// All stored sessions, ordered by id.
    pub fn load_all(&self) -> Result<Vec<SessionState>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }
}
