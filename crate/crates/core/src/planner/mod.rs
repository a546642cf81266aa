//! Stepwise plan generation by beam search over model-proposed steps,
//! rubric scoring, and task/department agent allocation.

mod allocate;
mod departments;
mod rubric;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use allocate::{select_local_agents, select_task_agent, Allocation};
pub use departments::DepartmentId;
pub use rubric::{evaluate_plan, parse_rubric, Evaluation, RubricScore, RubricWeights};
pub use search::{
    beam_search_plan, direct_plan, expand_candidates, plan_key, NodeStatus, PlanNode, SearchRound,
    SearchTrace, TraceNode,
};

/// The five perioperative task kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Analysis,
    Surgery,
    Safety,
    Risk,
    Rehab,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Analysis,
        TaskKind::Surgery,
        TaskKind::Safety,
        TaskKind::Risk,
        TaskKind::Rehab,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Analysis => "analysis",
            TaskKind::Surgery => "surgery",
            TaskKind::Safety => "safety",
            TaskKind::Risk => "risk",
            TaskKind::Rehab => "rehab",
        }
    }

    /// Short role statement used in prompts.
    pub fn role(self) -> &'static str {
        match self {
            TaskKind::Analysis => "case analysis and diagnostic risk review",
            TaskKind::Surgery => "personalized surgical plan simulation",
            TaskKind::Safety => "intraoperative safety monitoring and early warning",
            TaskKind::Risk => "postoperative complication risk assessment",
            TaskKind::Rehab => "rehabilitation and follow-up guidance",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "analysis" => Ok(TaskKind::Analysis),
            "surgery" => Ok(TaskKind::Surgery),
            "safety" => Ok(TaskKind::Safety),
            "risk" => Ok(TaskKind::Risk),
            "rehab" | "rehabilitation" => Ok(TaskKind::Rehab),
            other => Err(Error::InvalidArgument(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: usize,
    pub text: String,
}

/// An ordered list of surgical steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub task: TaskKind,
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn empty(task: TaskKind) -> Self {
        Plan {
            task,
            steps: Vec::new(),
        }
    }

    pub fn from_texts<S: AsRef<str>>(task: TaskKind, texts: &[S]) -> Result<Self> {
        let mut plan = Plan::empty(task);
        for t in texts {
            plan = plan.extended(t.as_ref())?;
        }
        Ok(plan)
    }

    /// A copy of this plan with one more step.
    pub fn extended(&self, text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::InvalidArgument("plan steps must be non-empty".into()));
        }
        let mut steps = self.steps.clone();
        steps.push(PlanStep {
            index: steps.len(),
            text: text.to_string(),
        });
        Ok(Plan {
            task: self.task,
            steps,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    /// True when `self` is `prefix` plus exactly one step.
    pub fn extends_by_one(&self, prefix: &Plan) -> bool {
        self.steps.len() == prefix.steps.len() + 1 && self.steps[..prefix.steps.len()] == prefix.steps[..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Search depth.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Step suggestions requested per expanded node.
    #[serde(default = "default_search_width")]
    pub search_width: usize,
    /// Nodes kept per depth.
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
    #[serde(default)]
    pub weights: RubricWeights,
}

fn default_max_steps() -> usize {
    3
}

fn default_search_width() -> usize {
    5
}

fn default_beam_width() -> usize {
    2
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_steps: default_max_steps(),
            search_width: default_search_width(),
            beam_width: default_beam_width(),
            weights: RubricWeights::default(),
        }
    }
}

impl PlannerConfig {
    pub fn new(max_steps: usize, search_width: usize, beam_width: usize) -> Self {
        PlannerConfig {
            max_steps,
            search_width,
            beam_width,
            weights: RubricWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.search_width == 0 || self.beam_width == 0 {
            return Err(Error::Config(
                "planner max_steps, search_width and beam_width must all be at least 1".into(),
            ));
        }
        self.weights.validate()
    }
}
