//! Four-stage laboratory workflow: abnormality identification, selective
//! filtering, evidence retrieval with synthesis, and working-memory update.

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{AgentContext, AgentId};
use crate::error::{Error, Result};
use crate::gateway::stage;
use crate::gateway::tools::{Evidence, ToolKind, ToolProvider};
use crate::gateway::Gateway;
use crate::memory::{EntryDraft, LabItem, PatientProfile, WorkingMemory};
use crate::planner::{PlanStep, TaskKind};

/// Items flagged abnormal, in their original order.
pub fn identify_abnormal(labs: &[LabItem]) -> Vec<LabItem> {
    labs.iter().filter(|l| l.abnormal).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSelection {
    pub items: Vec<LabItem>,
    /// Whether the backend was asked to rank.
    pub ranked: bool,
    /// Backend failed; the first `k_max` items were taken.
    pub flagged: bool,
}

fn item_line(item: &LabItem) -> String {
    let mut s = format!("{} = {}", item.name, item.value);
    if !item.unit.is_empty() {
        s.push(' ');
        s.push_str(&item.unit);
    }
    if let Some([lo, hi]) = item.reference_range {
        s.push_str(&format!(" (reference {lo}-{hi})"));
    }
    s
}

/// Keeps at most `k_max` abnormal items. Small lists pass through without a
/// backend call; otherwise the backend ranks them and unmatched names are
/// dropped, with any shortfall filled in original order.
pub fn select_lab_items(
    abnormal: &[LabItem],
    patient: &PatientProfile,
    task: TaskKind,
    k_max: usize,
    gateway: &Gateway,
) -> Result<LabSelection> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    if abnormal.len() <= k_max {
        return Ok(LabSelection {
            items: abnormal.to_vec(),
            ranked: false,
            flagged: false,
        });
    }
    let listing: Vec<String> = abnormal.iter().map(|i| format!("- {}", item_line(i))).collect();
    let prompt = format!(
        "Rank the abnormal laboratory results below by clinical relevance to this patient and task, \
         and keep the {k_max} most important.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         Abnormal results:\n{}\n\
         Answer with the test names only, one per line, most important first.",
        patient.basic_info.render(),
        task.as_str(),
        task.role(),
        listing.join("\n")
    );
    let mut taken = vec![false; abnormal.len()];
    let mut order = Vec::new();
    let flagged = match gateway.complete(stage::LAB_SELECT, &prompt) {
        Ok(c) => {
            for name in c.text.split(['\n', ',']) {
                let name = crate::util::strip_list_marker(name).to_lowercase();
                if name.is_empty() || order.len() == k_max {
                    continue;
                }
                if let Some(i) = (0..abnormal.len()).find(|&i| !taken[i] && abnormal[i].name.to_lowercase() == name) {
                    taken[i] = true;
                    order.push(i);
                }
            }
            false
        }
        Err(e) => {
            warn!(error = %e, "lab selection failed; keeping the first k_max items");
            true
        }
    };
    for (i, taken) in taken.iter_mut().enumerate() {
        if order.len() == k_max {
            break;
        }
        if !*taken {
            *taken = true;
            order.push(i);
        }
    }
    Ok(LabSelection {
        items: order.into_iter().map(|i| abnormal[i].clone()).collect(),
        ranked: true,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub query: String,
    pub evidence: Vec<Evidence>,
    /// No tool answered (all disabled or all failed).
    pub flagged: bool,
}

/// Queries every enabled tool with `name value`, keeping at most
/// `max_evidence` snippets per tool. Failing tools are skipped.
pub fn retrieve_evidence(
    item: &LabItem,
    tools: &dyn ToolProvider,
    enabled: &[ToolKind],
    max_evidence: usize,
) -> EvidenceSet {
    let query = format!("{} {}", item.name, item.value);
    let mut evidence = Vec::new();
    let mut answered = 0;
    for tool in ToolKind::ALL.into_iter().filter(|t| enabled.contains(t)) {
        match tools.query(tool, &query) {
            Ok(hits) => {
                answered += 1;
                evidence.extend(hits.into_iter().take(max_evidence));
            }
            Err(e) => warn!(%tool, error = %e, "evidence tool failed; skipping"),
        }
    }
    EvidenceSet {
        query,
        evidence,
        flagged: answered == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabAnalysis {
    pub item: LabItem,
    pub evidence: Vec<Evidence>,
    pub interpretation: String,
    pub entry_id: String,
    #[serde(default)]
    pub flags: Vec<String>,
}

/// Everything the lab agent did at one plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRun {
    pub step: usize,
    pub total_items: usize,
    pub abnormal: Vec<String>,
    pub selected: Vec<String>,
    pub selection: LabSelectionSummary,
    pub analyses: Vec<LabAnalysis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabSelectionSummary {
    pub k_max: usize,
    pub ranked: bool,
    pub flagged: bool,
}

fn synthesis_prompt(item: &LabItem, evidence: &[Evidence], patient: &PatientProfile, task: TaskKind) -> String {
    let mut prompt = format!(
        "Interpret this abnormal laboratory result for the perioperative team.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         Result: {}\n",
        patient.basic_info.render(),
        task.as_str(),
        task.role(),
        item_line(item)
    );
    if evidence.is_empty() {
        prompt.push_str("No supporting literature was retrieved.\n");
    }
    for e in evidence {
        prompt.push_str(&format!("Evidence [{}] ({}): {}\n", e.evidence_id, e.source, e.snippet));
    }
    prompt.push_str("Give a short structured interpretation naming the test.");
    prompt
}

/// Runs the four lab stages for one plan step. One working-memory entry is
/// appended per selected item.
pub fn run_lab_agent(
    ctx: &AgentContext<'_>,
    step: &PlanStep,
    labs: &[LabItem],
    working: &mut WorkingMemory,
) -> Result<LabRun> {
    let k_max = ctx.settings.k_max;
    let abnormal = identify_abnormal(labs);
    let selection = select_lab_items(&abnormal, ctx.patient, ctx.task, k_max, ctx.gateway)?;

    let mut analyses = Vec::with_capacity(selection.items.len());
    for item in &selection.items {
        let mut flags = Vec::new();
        let found = retrieve_evidence(item, ctx.tools, &ctx.settings.enabled_tools, ctx.settings.max_evidence);
        if found.flagged {
            flags.push("no-evidence".into());
        }
        let prompt = synthesis_prompt(item, &found.evidence, ctx.patient, ctx.task);
        let (mut text, input_tokens, output_tokens) = match ctx.gateway.complete(stage::LAB_SYNTHESIZE, &prompt) {
            Ok(c) if !c.text.trim().is_empty() => (c.text.trim().to_string(), c.input_tokens, c.output_tokens),
            Ok(_) | Err(_) => {
                flags.push("failed".into());
                (format!("{}: interpretation unavailable.", item.name), 0, 0)
            }
        };
        if !text.to_lowercase().contains(&item.name.to_lowercase()) {
            text = format!("{}: {}", item.name, text);
        }
        let entry = working.append(EntryDraft {
            author: AgentId::Lab,
            step: step.index,
            content: text.clone(),
            timestamp: ctx.gateway.now(),
            input_tokens,
            output_tokens,
        })?;
        analyses.push(LabAnalysis {
            item: item.clone(),
            evidence: found.evidence,
            interpretation: text,
            entry_id: entry.entry_id.clone(),
            flags,
        });
    }

    Ok(LabRun {
        step: step.index,
        total_items: labs.len(),
        abnormal: abnormal.iter().map(|i| i.name.clone()).collect(),
        selected: selection.items.iter().map(|i| i.name.clone()).collect(),
        selection: LabSelectionSummary {
            k_max,
            ranked: selection.ranked,
            flagged: selection.flagged,
        },
        analyses,
    })
}
