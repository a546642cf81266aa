use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{DepartmentId, PlanStep, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::{stage, Gateway};
use crate::memory::PatientProfile;
use crate::util::word_tokens;

/// Keyword fallback, most safety-critical interpretation first.
const KEYWORDS: [(TaskKind, &[&str]); 5] = [
    (
        TaskKind::Safety,
        &["intraoperative", "monitor", "monitoring", "safety", "warning", "alarm", "alert"],
    ),
    (
        TaskKind::Risk,
        &["complication", "complications", "risk", "risks", "postoperative", "adverse"],
    ),
    (
        TaskKind::Surgery,
        &["surgical", "surgery", "operation", "operative", "procedure", "plan"],
    ),
    (
        TaskKind::Rehab,
        &["rehab", "rehabilitation", "recovery", "exercise", "exercises", "follow", "lifestyle"],
    ),
    (
        TaskKind::Analysis,
        &["analysis", "analyze", "diagnosis", "diagnoses", "diagnostic", "case", "admission"],
    ),
];

fn keyword_match(description: &str) -> Option<TaskKind> {
    let tokens: BTreeSet<String> = word_tokens(description).collect();
    KEYWORDS
        .iter()
        .find(|(_, words)| words.iter().any(|w| tokens.contains(*w)))
        .map(|(k, _)| *k)
}

fn parse_kind(text: &str) -> Option<TaskKind> {
    let cleaned: String = text
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string();
    cleaned.parse().ok()
}

/// Classifies a task description into one of the five task kinds.
///
/// A description that is itself a kind name skips the backend. An
/// unrecognized answer is re-asked once; after that (or on backend failure)
/// keywords in the description decide.
pub fn select_task_agent(description: &str, gateway: &Gateway) -> Result<TaskKind> {
    if description.trim().is_empty() {
        return Err(Error::InvalidArgument("task description is empty".into()));
    }
    if let Ok(kind) = description.parse::<TaskKind>() {
        return Ok(kind);
    }
    let prompt = format!(
        "Classify the perioperative task below into exactly one of: analysis, surgery, safety, risk, rehab.\n\
         Task: {}\n\
         Answer with the single category name.",
        description.trim()
    );
    let mut backend_error = None;
    match gateway.complete(stage::CLASSIFY, &prompt) {
        Ok(c) => {
            if let Some(k) = parse_kind(&c.text) {
                return Ok(k);
            }
            let retry = format!(
                "{prompt}\nYour answer `{}` is not one of the five names. Answer with one name only.",
                c.text.trim()
            );
            match gateway.complete(stage::CLASSIFY, &retry) {
                Ok(c) => {
                    if let Some(k) = parse_kind(&c.text) {
                        return Ok(k);
                    }
                }
                Err(e) => backend_error = Some(e),
            }
        }
        Err(e) => backend_error = Some(e),
    }
    if let Some(e) = &backend_error {
        warn!(error = %e, "task classification backend failed; using keywords");
    }
    keyword_match(description).ok_or_else(|| {
        Error::Classification(match backend_error {
            Some(e) => format!("backend failed ({e}) and no keyword matched"),
            None => "backend answer and keywords both inconclusive".into(),
        })
    })
}

/// Departments chosen for a plan step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub step: usize,
    /// Registry order.
    pub departments: Vec<DepartmentId>,
    /// Names from the backend that matched no registry department.
    pub dropped: Vec<String>,
    /// True when nothing usable came back and the default pair was used.
    pub defaulted: bool,
}

const DEFAULT_DEPARTMENTS: [DepartmentId; 2] = [DepartmentId::GeneralSurgery, DepartmentId::Anesthesiology];

/// Picks the specialty departments that should weigh in on a plan step.
pub fn select_local_agents(patient: &PatientProfile, step: &PlanStep, gateway: &Gateway) -> Allocation {
    let registry: Vec<&str> = DepartmentId::ALL.iter().map(|d| d.as_str()).collect();
    let prompt = format!(
        "Select the clinical departments that should contribute to this surgical step.\n\
         Patient: {}\n\
         Step: {}\n\
         Departments: {}\n\
         Answer with a comma-separated list of department names.",
        patient.basic_info.render(),
        step.text,
        registry.join(", ")
    );
    let mut chosen = BTreeSet::new();
    let mut dropped = Vec::new();
    match gateway.complete(stage::ALLOCATE, &prompt) {
        Ok(c) => {
            for name in c.text.split([',', '\n', ';']) {
                let name = crate::util::strip_list_marker(name);
                if name.is_empty() {
                    continue;
                }
                match DepartmentId::lookup(name) {
                    Some(d) => {
                        chosen.insert(d);
                    }
                    None => dropped.push(name.to_string()),
                }
            }
        }
        Err(e) => warn!(error = %e, "department allocation failed"),
    }
    let defaulted = chosen.is_empty();
    if defaulted {
        warn!(step = step.index, "no usable departments; defaulting to general surgery + anesthesiology");
        chosen.extend(DEFAULT_DEPARTMENTS);
    }
    Allocation {
        step: step.index,
        departments: chosen.into_iter().collect(),
        dropped,
        defaulted,
    }
}
