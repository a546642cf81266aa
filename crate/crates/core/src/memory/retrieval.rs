use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder, Embedding};
use super::store::{ClinicalRecord, ExemplarCase, LongTermMemory, PatientProfile};
use crate::error::{Error, Result};
use crate::gateway::{stage, Gateway};
use crate::planner::{PlanStep, TaskKind};

/// A retrieval query derived from patient info, task and current step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub embedding: Embedding,
    /// True when the backend gave no usable text and the query was built
    /// from the raw inputs.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHit {
    pub record_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseHit {
    pub case_id: String,
    pub similarity: f64,
}

fn query_prompt(patient: &PatientProfile, task: TaskKind, step: &PlanStep) -> String {
    format!(
        "Write one short search query for retrieving this patient's most relevant historical record.\n\
         Patient: {}\n\
         Task: {}\n\
         Current surgical step: {}\n\
         Answer with the query text only.",
        patient.basic_info.render(),
        task.as_str(),
        step.text
    )
}

/// Asks the backend for a retrieval query and embeds it.
pub fn generate_query(
    patient: &PatientProfile,
    task: TaskKind,
    step: &PlanStep,
    gateway: &Gateway,
    embedder: &dyn Embedder,
) -> Result<Query> {
    let prompt = query_prompt(patient, task, step);
    let mut text = gateway.complete(stage::QUERY, &prompt)?.text.trim().to_string();
    if text.is_empty() {
        let retry = format!("{prompt}\nYour previous answer was empty. Give a non-empty query.");
        text = gateway.complete(stage::QUERY, &retry)?.text.trim().to_string();
    }
    let fallback = text.is_empty();
    if fallback {
        text = format!("{} | {} | {}", patient.basic_info.render(), task.as_str(), step.text);
    }
    let embedding = embedder.embed(&text)?;
    Ok(Query {
        text,
        embedding,
        fallback,
    })
}

/// Most similar record of one patient. Ties go to the earliest date, then
/// the lexicographically smallest record id.
pub fn retrieve_best_record<'a>(
    query: &Query,
    store: &'a LongTermMemory,
    patient_id: &str,
) -> Result<(&'a ClinicalRecord, f64)> {
    let mut best: Option<(&ClinicalRecord, f64)> = None;
    for record in store.records_for(patient_id) {
        let sim = cosine(query.embedding.as_slice(), record.embedding.as_slice());
        let better = match best {
            None => true,
            Some((cur, cur_sim)) => match sim.total_cmp(&cur_sim) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => (record.date, &record.record_id) < (cur.date, &cur.record_id),
            },
        };
        if better {
            best = Some((record, sim));
        }
    }
    best.ok_or_else(|| Error::NoRecords(patient_id.to_string()))
}

/// Exemplar cases with similarity at least `threshold`, most similar first
/// (ties by case id), at most `max_cases` of them.
pub fn retrieve_exemplar_cases<'a>(
    query: &Query,
    store: &'a LongTermMemory,
    threshold: f64,
    max_cases: usize,
) -> Result<Vec<(&'a ExemplarCase, f64)>> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "similarity threshold {threshold} outside [-1, 1]"
        )));
    }
    let mut hits: Vec<(&ExemplarCase, f64)> = store
        .cases
        .iter()
        .map(|c| (c, cosine(query.embedding.as_slice(), c.embedding.as_slice())))
        .filter(|(_, sim)| *sim >= threshold)
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.case_id.cmp(&b.0.case_id)));
    hits.truncate(max_cases);
    Ok(hits)
}
