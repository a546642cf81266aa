use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{AgentContext, AgentId};
use crate::error::{Error, Result};
use crate::gateway::stage;
use crate::memory::{
    generate_query, retrieve_best_record, retrieve_exemplar_cases, CaseHit, ClinicalRecord, EntryDraft,
    ExemplarCase, RecordHit, WorkingMemory,
};
use crate::planner::PlanStep;

/// Working-memory entries shown to a department agent.
pub const MEMORY_WINDOW: usize = 10;

/// Token budget for the full-record context used when retrieval is disabled.
pub const FULL_RECORD_TOKENS: usize = 256;

/// One agent's contribution at one plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub agent: AgentId,
    pub step: usize,
    pub step_text: String,
    /// Working-memory entry holding the recommendation.
    pub entry_id: String,
    pub recommendation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cited_record: Option<RecordHit>,
    #[serde(default)]
    pub cited_cases: Vec<CaseHit>,
    #[serde(default)]
    pub evidence_ids: Vec<String>,
    /// Degradation markers such as `no-history` or `failed`.
    #[serde(default)]
    pub flags: Vec<String>,
}

impl AgentOutput {
    pub fn cited_record_id(&self) -> Option<&str> {
        self.cited_record.as_ref().map(|r| r.record_id.as_str())
    }

    pub fn cited_case_ids(&self) -> Vec<&str> {
        self.cited_cases.iter().map(|c| c.case_id.as_str()).collect()
    }

    pub fn is_failed(&self) -> bool {
        self.flags.iter().any(|f| f == "failed")
    }
}

fn truncate_tokens(text: &str, limit: usize) -> String {
    text.split_whitespace().take(limit).collect::<Vec<_>>().join(" ")
}

fn agent_role(agent: AgentId) -> String {
    match agent {
        AgentId::Department(d) => format!("the {} department", d.display_name()),
        AgentId::Lab => "the laboratory department".into(),
        AgentId::Generic => "a general clinician without specialty focus".into(),
    }
}

struct Retrieved<'a> {
    query: Option<String>,
    record: Option<(&'a ClinicalRecord, f64)>,
    cases: Vec<(&'a ExemplarCase, f64)>,
    full_context: Option<String>,
}

fn retrieve<'a>(ctx: &AgentContext<'a>, step: &PlanStep, flags: &mut Vec<String>) -> Result<Retrieved<'a>> {
    let patient_id = ctx.patient.patient_id.as_str();
    if ctx.settings.memory_ablated {
        let mut records = ctx.store.records_for(patient_id);
        records.sort_by(|a, b| (a.date, &a.record_id).cmp(&(b.date, &b.record_id)));
        let joined: Vec<String> = records.iter().map(|r| format!("{}: {}", r.date, r.text)).collect();
        flags.push("full-record-context".into());
        if records.is_empty() {
            flags.push("no-history".into());
        }
        return Ok(Retrieved {
            query: None,
            record: None,
            cases: Vec::new(),
            full_context: Some(truncate_tokens(&joined.join("\n"), FULL_RECORD_TOKENS)),
        });
    }

    let query = match generate_query(ctx.patient, ctx.task, step, ctx.gateway, ctx.embedder) {
        Ok(q) => q,
        Err(e @ (Error::Backend { .. } | Error::Transport(_) | Error::ScriptExhausted { .. } | Error::Embed(_))) => {
            warn!(error = %e, "query generation failed; reasoning without retrieval");
            flags.push("no-retrieval".into());
            return Ok(Retrieved {
                query: None,
                record: None,
                cases: Vec::new(),
                full_context: None,
            });
        }
        Err(e) => return Err(e),
    };
    if query.fallback {
        flags.push("query-fallback".into());
    }
    let record = match retrieve_best_record(&query, ctx.store, patient_id) {
        Ok(hit) => Some(hit),
        Err(Error::NoRecords(_)) => {
            flags.push("no-history".into());
            None
        }
        Err(e) => return Err(e),
    };
    let cases = retrieve_exemplar_cases(&query, ctx.store, ctx.settings.threshold, ctx.settings.max_cases)?;
    Ok(Retrieved {
        query: Some(query.text),
        record,
        cases,
        full_context: None,
    })
}

fn reasoning_prompt(
    ctx: &AgentContext<'_>,
    agent: AgentId,
    step: &PlanStep,
    retrieved: &Retrieved<'_>,
    working: &WorkingMemory,
) -> String {
    let mut prompt = format!(
        "You are {} in a perioperative team.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         Current surgical step: {}\n",
        agent_role(agent),
        ctx.patient.basic_info.render(),
        ctx.task.as_str(),
        ctx.task.role(),
        step.text
    );
    if let Some((r, _)) = retrieved.record {
        prompt.push_str(&format!("Most relevant record [{}] ({}): {}\n", r.record_id, r.date, r.text));
    }
    if let Some(full) = &retrieved.full_context {
        prompt.push_str(&format!("Patient records:\n{full}\n"));
    }
    for (c, _) in &retrieved.cases {
        prompt.push_str(&format!(
            "Similar case [{}]: {} Workflow: {}\n",
            c.case_id,
            c.summary,
            c.steps.join("; ")
        ));
    }
    let recent = working.recent(MEMORY_WINDOW);
    if !recent.is_empty() {
        prompt.push_str("Team notes so far:\n");
        for e in recent {
            prompt.push_str(&format!("- [{}] {}\n", e.author, e.content));
        }
    }
    prompt.push_str("Give concise recommendations from your specialty's perspective for this step.");
    prompt
}

/// Runs one department (or the generic agent) for one plan step and
/// appends its recommendation to working memory.
///
/// Retrieval gaps and backend failures degrade the output (flagged) rather
/// than failing; only working-memory errors propagate.
pub fn run_department_agent(
    ctx: &AgentContext<'_>,
    agent: AgentId,
    step: &PlanStep,
    working: &mut WorkingMemory,
) -> Result<AgentOutput> {
    if agent == AgentId::Lab {
        return Err(Error::InvalidArgument("the lab agent has its own workflow".into()));
    }
    let mut flags = Vec::new();
    let retrieved = retrieve(ctx, step, &mut flags)?;
    let prompt = reasoning_prompt(ctx, agent, step, &retrieved, working);
    let stage_tag = if agent == AgentId::Generic {
        stage::GENERIC
    } else {
        stage::DEPARTMENT
    };
    let (recommendation, input_tokens, output_tokens) = match ctx.gateway.complete(stage_tag, &prompt) {
        Ok(c) if !c.text.trim().is_empty() => (c.text.trim().to_string(), c.input_tokens, c.output_tokens),
        Ok(_) => {
            flags.push("failed".into());
            (format!("[{agent}] returned an empty recommendation."), 0, 0)
        }
        Err(e) => {
            warn!(%agent, error = %e, "department reasoning failed");
            flags.push("failed".into());
            (format!("[{agent}] recommendation unavailable: backend failure."), 0, 0)
        }
    };

    let entry = working.append(EntryDraft {
        author: agent,
        step: step.index,
        content: recommendation.clone(),
        timestamp: ctx.gateway.now(),
        input_tokens,
        output_tokens,
    })?;

    Ok(AgentOutput {
        agent,
        step: step.index,
        step_text: step.text.clone(),
        entry_id: entry.entry_id.clone(),
        recommendation,
        query: retrieved.query,
        cited_record: retrieved.record.map(|(r, sim)| RecordHit {
            record_id: r.record_id.clone(),
            similarity: sim,
        }),
        cited_cases: retrieved
            .cases
            .iter()
            .map(|(c, sim)| CaseHit {
                case_id: c.case_id.clone(),
                similarity: *sim,
            })
            .collect(),
        evidence_ids: Vec::new(),
        flags,
    })
}
