//! Beam search over stepwise plan extensions.
//!
//! Each round asks the backend for `search_width` next steps per beam node,
//! scores every one-step extension with the rubric evaluator, and keeps the
//! top `beam_width`. The full tree, including pruned candidates, is kept in a
//! [`SearchTrace`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::rubric::{evaluate_plan, RubricScore};
use super::{Plan, PlannerConfig, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::{stage, Gateway};
use crate::memory::PatientProfile;
use crate::util::strip_list_marker;

/// The plan line embedded in planner prompts, terminated by a newline.
/// Scripts key step suggestions and scores on it.
pub fn plan_key<S: AsRef<str>>(steps: &[S]) -> String {
    if steps.is_empty() {
        "[plan] (empty)\n".to_string()
    } else {
        let joined: Vec<&str> = steps.iter().map(|s| s.as_ref()).collect();
        format!("[plan] {}\n", joined.join(" -> "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: u32,
    pub plan: Plan,
    pub score: RubricScore,
    pub depth: usize,
    pub parent_id: Option<u32>,
    /// Position among the suggestions of its parent's expansion.
    pub origin_rank: usize,
    #[serde(default)]
    pub flagged: bool,
}

impl PlanNode {
    pub fn root(task: TaskKind) -> Self {
        PlanNode {
            id: 0,
            plan: Plan::empty(task),
            score: RubricScore::zero(),
            depth: 0,
            parent_id: None,
            origin_rank: 0,
            flagged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Root,
    Kept,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub id: u32,
    pub parent_id: Option<u32>,
    pub depth: usize,
    pub origin_rank: usize,
    pub steps: Vec<String>,
    pub score: Option<RubricScore>,
    pub flagged: bool,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRound {
    pub depth: usize,
    pub expanded: Vec<u32>,
    /// Parents whose expansion produced no usable suggestion.
    pub skipped: Vec<u32>,
    pub candidates: Vec<u32>,
    pub beam: Vec<u32>,
}

/// Complete record of one beam search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub max_steps: usize,
    pub search_width: usize,
    pub beam_width: usize,
    pub nodes: Vec<TraceNode>,
    pub rounds: Vec<SearchRound>,
    pub best_id: u32,
    pub best_score: f64,
    /// Set when a round produced no candidates and the search stopped early.
    pub truncated: bool,
}

impl SearchTrace {
    pub fn node(&self, id: u32) -> Option<&TraceNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn pruned_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.status == NodeStatus::Pruned).count()
    }
}

fn expansion_prompt(parent: &Plan, patient: &PatientProfile, task: TaskKind, width: usize) -> String {
    format!(
        "You are planning a surgical workflow one step at a time.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         {}\
         Propose {} distinct candidates for the next step of this plan. \
         Reply with one step per line and nothing else.",
        patient.basic_info.render(),
        task.as_str(),
        task.role(),
        plan_key(&parent.texts()),
        width
    )
}

fn parse_suggestions(text: &str, limit: usize) -> Vec<String> {
    text.lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .take(limit)
        .map(str::to_string)
        .collect()
}

/// Expands every beam node by one step. Candidates come back in parent
/// order, then suggestion order; ids are drawn from `next_id`.
pub fn expand_candidates(
    beam: &[PlanNode],
    patient: &PatientProfile,
    task: TaskKind,
    config: &PlannerConfig,
    gateway: &Gateway,
    next_id: &mut u32,
) -> Result<Vec<PlanNode>> {
    let Some(first) = beam.first() else {
        return Err(Error::InvalidArgument("cannot expand an empty beam".into()));
    };
    if beam.iter().any(|n| n.depth != first.depth) {
        return Err(Error::InvalidArgument("beam nodes must share one depth".into()));
    }
    let mut out = Vec::new();
    for parent in beam {
        let prompt = expansion_prompt(&parent.plan, patient, task, config.search_width);
        let response = gateway.complete(stage::EXPAND, &prompt)?;
        let suggestions = parse_suggestions(&response.text, config.search_width);
        if suggestions.is_empty() {
            warn!(parent = parent.id, "expansion produced no suggestions; skipping parent");
            continue;
        }
        for (rank, text) in suggestions.iter().enumerate() {
            let plan = parent.plan.extended(text)?;
            let eval = evaluate_plan(&plan, patient, task, &config.weights, gateway)?;
            out.push(PlanNode {
                id: *next_id,
                plan,
                score: eval.score,
                depth: parent.depth + 1,
                parent_id: Some(parent.id),
                origin_rank: rank,
                flagged: eval.flagged,
            });
            *next_id += 1;
        }
    }
    Ok(out)
}

/// Score descending, then origin rank, then parent id.
fn beam_order(a: &PlanNode, b: &PlanNode) -> Ordering {
    b.score
        .total
        .total_cmp(&a.score.total)
        .then(a.origin_rank.cmp(&b.origin_rank))
        .then(a.parent_id.cmp(&b.parent_id))
}

fn trace_node(n: &PlanNode, status: NodeStatus) -> TraceNode {
    TraceNode {
        id: n.id,
        parent_id: n.parent_id,
        depth: n.depth,
        origin_rank: n.origin_rank,
        steps: n.plan.texts(),
        score: n.parent_id.map(|_| n.score),
        flagged: n.flagged,
        status,
    }
}

/// Runs `max_steps` rounds of expand, score and top-`beam_width` selection
/// and returns the best plan of the final beam with its trace.
pub fn beam_search_plan(
    patient: &PatientProfile,
    task: TaskKind,
    config: &PlannerConfig,
    gateway: &Gateway,
) -> Result<(Plan, SearchTrace)> {
    config.validate()?;
    let root = PlanNode::root(task);
    let mut nodes = vec![trace_node(&root, NodeStatus::Root)];
    let mut rounds = Vec::new();
    let mut beam = vec![root];
    let mut next_id = 1;
    let mut truncated = false;

    for depth in 1..=config.max_steps {
        let candidates = expand_candidates(&beam, patient, task, config, gateway, &mut next_id)?;
        let expanded: Vec<u32> = beam.iter().map(|n| n.id).collect();
        let skipped: Vec<u32> = expanded
            .iter()
            .copied()
            .filter(|id| !candidates.iter().any(|c| c.parent_id == Some(*id)))
            .collect();
        if candidates.is_empty() {
            if depth == 1 {
                return Err(Error::EmptySearch { depth });
            }
            warn!(depth, "no candidates; returning best plan so far");
            rounds.push(SearchRound {
                depth,
                expanded,
                skipped,
                candidates: Vec::new(),
                beam: Vec::new(),
            });
            truncated = true;
            break;
        }

        let mut ranked = candidates.clone();
        ranked.sort_by(beam_order);
        ranked.truncate(config.beam_width);
        let kept: Vec<u32> = ranked.iter().map(|n| n.id).collect();

        for c in &candidates {
            let status = if kept.contains(&c.id) {
                NodeStatus::Kept
            } else {
                NodeStatus::Pruned
            };
            nodes.push(trace_node(c, status));
        }
        rounds.push(SearchRound {
            depth,
            expanded,
            skipped,
            candidates: candidates.iter().map(|n| n.id).collect(),
            beam: kept,
        });
        beam = ranked;
    }

    let best = &beam[0];
    let trace = SearchTrace {
        max_steps: config.max_steps,
        search_width: config.search_width,
        beam_width: config.beam_width,
        nodes,
        rounds,
        best_id: best.id,
        best_score: best.score.total,
        truncated,
    };
    Ok((best.plan.clone(), trace))
}

/// Single-call planning used when the search stage is disabled: the backend
/// writes the whole plan at once.
pub fn direct_plan(
    patient: &PatientProfile,
    task: TaskKind,
    config: &PlannerConfig,
    gateway: &Gateway,
) -> Result<Plan> {
    let prompt = format!(
        "Write a surgical plan of at most {} steps.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         Reply with one step per line.",
        config.max_steps,
        patient.basic_info.render(),
        task.as_str(),
        task.role()
    );
    let response = gateway.complete(stage::DIRECT_PLAN, &prompt)?;
    let steps = parse_suggestions(&response.text, config.max_steps);
    if steps.is_empty() {
        return Err(Error::EmptySearch { depth: 1 });
    }
    Plan::from_texts(task, &steps)
}
