//! Evaluation metrics for the five task kinds and a corpus-level harness.
//!
//! Set metrics compare normalized strings (trimmed, lowercased) as sets, so
//! duplicates and ordering never matter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::memory::Embedder;
use crate::planner::TaskKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("reference set is empty")]
    EmptyReference,
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("weights sum to {0}, not 1")]
    Weight(f64),
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type MetricResult = std::result::Result<f64, MetricError>;

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

fn normalized_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items
        .iter()
        .map(|s| normalize(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

fn coverage<S: AsRef<str>, T: AsRef<str>>(found: &[S], reference: &[T]) -> MetricResult {
    let reference = normalized_set(reference);
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let found = normalized_set(found);
    Ok(found.intersection(&reference).count() as f64 / reference.len() as f64)
}

/// Share of reference diagnoses that were detected.
pub fn diagnostic_coverage<S: AsRef<str>, T: AsRef<str>>(detected: &[S], reference: &[T]) -> MetricResult {
    coverage(detected, reference)
}

/// Share of potential misdiagnoses that were avoided.
pub fn misdiagnosis_avoidance<S: AsRef<str>, T: AsRef<str>>(avoided: &[S], potential: &[T]) -> MetricResult {
    coverage(avoided, potential)
}

/// Share of reference complications that were detected.
pub fn complication_recall<S: AsRef<str>, T: AsRef<str>>(detected: &[S], reference: &[T]) -> MetricResult {
    coverage(detected, reference)
}

/// Weights for personalization, rationality and safety.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityWeights(pub [f64; 3]);

impl Default for FeasibilityWeights {
    fn default() -> Self {
        FeasibilityWeights([1.0 / 3.0; 3])
    }
}

/// Weighted plan feasibility from personalization, rationality and safety
/// ratings, each in [0, 1].
pub fn plan_feasibility(p: f64, r: f64, s: f64, weights: &FeasibilityWeights) -> MetricResult {
    let sum: f64 = weights.0.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > 1e-9 {
        return Err(MetricError::Weight(sum));
    }
    for (name, v) in [("personalization", p), ("rationality", r), ("safety", s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(MetricError::Invalid(format!("{name} rating {v} outside [0, 1]")));
        }
    }
    let [wp, wr, ws] = weights.0;
    Ok(wp * p + wr * r + ws * s)
}

pub fn guideline_adherence(aligned_steps: usize, total_steps: usize) -> MetricResult {
    if total_steps == 0 {
        return Err(MetricError::ZeroDenominator);
    }
    if aligned_steps > total_steps {
        return Err(MetricError::Invalid(format!(
            "{aligned_steps} aligned steps out of {total_steps}"
        )));
    }
    Ok(aligned_steps as f64 / total_steps as f64)
}

/// TP / (TP + FN).
pub fn early_warning_sensitivity(tp: usize, fn_: usize) -> MetricResult {
    if tp + fn_ == 0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(tp as f64 / (tp + fn_) as f64)
}

/// FP / (TP + FP).
pub fn false_alarm_rate(fp: usize, tp: usize) -> MetricResult {
    if tp + fp == 0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(fp as f64 / (tp + fp) as f64)
}

/// Cosine similarity between generated and reference guidance embeddings.
pub fn rehab_similarity(a: &[f64], b: &[f64]) -> MetricResult {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Judge ratings feeding [`plan_feasibility`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilityRating {
    pub personalization: f64,
    pub rationality: f64,
    pub safety: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Predictions {
    pub diagnoses: Vec<String>,
    pub avoided_misdiagnoses: Vec<String>,
    pub plan_steps: Vec<String>,
    pub alarms: Vec<String>,
    pub complications: Vec<String>,
    pub guidance: Option<String>,
}

/// Ground truth. A metric is computed only when its reference is present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct References {
    pub diagnoses: Option<Vec<String>>,
    pub potential_misdiagnoses: Option<Vec<String>>,
    pub feasibility: Option<FeasibilityRating>,
    pub guideline_steps: Option<Vec<String>>,
    pub events: Option<Vec<String>>,
    pub complications: Option<Vec<String>>,
    pub guidance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub session_id: String,
    pub task: TaskKind,
    #[serde(default)]
    pub predictions: Predictions,
    #[serde(default)]
    pub references: References,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "DC")]
    Dc,
    #[serde(rename = "MAR")]
    Mar,
    #[serde(rename = "PFS")]
    Pfs,
    #[serde(rename = "GAR")]
    Gar,
    #[serde(rename = "EWS")]
    Ews,
    #[serde(rename = "FAR")]
    Far,
    Recall,
    Sim,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Dc,
        Metric::Mar,
        Metric::Pfs,
        Metric::Gar,
        Metric::Ews,
        Metric::Far,
        Metric::Recall,
        Metric::Sim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Dc => "DC",
            Metric::Mar => "MAR",
            Metric::Pfs => "PFS",
            Metric::Gar => "GAR",
            Metric::Ews => "EWS",
            Metric::Far => "FAR",
            Metric::Recall => "Recall",
            Metric::Sim => "Sim",
        }
    }
}

/// One metric for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Cell {
    Value { value: f64 },
    Undefined { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: String,
    pub task: TaskKind,
    /// Only metrics whose reference is present.
    pub metrics: BTreeMap<Metric, Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Mean over defined values; absent when none are defined.
    pub mean: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub sessions: Vec<SessionRow>,
    pub summary: Vec<MetricSummary>,
}

fn cell(r: MetricResult) -> Result<Cell> {
    match r {
        Ok(value) => Ok(Cell::Value { value }),
        Err(e @ (MetricError::EmptyReference | MetricError::ZeroDenominator | MetricError::ZeroVector)) => {
            Ok(Cell::Undefined { reason: e.to_string() })
        }
        Err(e) => Err(Error::InvalidArgument(e.to_string())),
    }
}

/// Computes every metric a record has references for.
pub fn evaluate_record(
    record: &EvalRecord,
    embedder: &dyn Embedder,
    weights: &FeasibilityWeights,
) -> Result<SessionRow> {
    let p = &record.predictions;
    let r = &record.references;
    let mut metrics = BTreeMap::new();
    let wrap = |e: Error| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", record.session_id)),
        other => other,
    };

    if let Some(refs) = &r.diagnoses {
        metrics.insert(Metric::Dc, cell(diagnostic_coverage(&p.diagnoses, refs)).map_err(wrap)?);
    }
    if let Some(refs) = &r.potential_misdiagnoses {
        metrics.insert(Metric::Mar, cell(misdiagnosis_avoidance(&p.avoided_misdiagnoses, refs)).map_err(wrap)?);
    }
    if let Some(f) = &r.feasibility {
        metrics.insert(
            Metric::Pfs,
            cell(plan_feasibility(f.personalization, f.rationality, f.safety, weights)).map_err(wrap)?,
        );
    }
    if let Some(guide) = &r.guideline_steps {
        let steps = normalized_set(&p.plan_steps);
        let guide = normalized_set(guide);
        let aligned = steps.intersection(&guide).count();
        metrics.insert(Metric::Gar, cell(guideline_adherence(aligned, steps.len())).map_err(wrap)?);
    }
    if let Some(events) = &r.events {
        let alarms = normalized_set(&p.alarms);
        let events = normalized_set(events);
        let tp = alarms.intersection(&events).count();
        let fn_ = events.len() - tp;
        let fp = alarms.len() - tp;
        metrics.insert(Metric::Ews, cell(early_warning_sensitivity(tp, fn_)).map_err(wrap)?);
        metrics.insert(Metric::Far, cell(false_alarm_rate(fp, tp)).map_err(wrap)?);
    }
    if let Some(refs) = &r.complications {
        metrics.insert(Metric::Recall, cell(complication_recall(&p.complications, refs)).map_err(wrap)?);
    }
    if let Some(reference) = &r.guidance {
        let generated = p.guidance.as_deref().unwrap_or("");
        let a = embedder.embed(generated)?;
        let b = embedder.embed(reference)?;
        metrics.insert(Metric::Sim, cell(rehab_similarity(a.as_slice(), b.as_slice())).map_err(wrap)?);
    }
    Ok(SessionRow {
        session_id: record.session_id.clone(),
        task: record.task,
        metrics,
    })
}

/// Per-session rows plus per-metric means. Undefined values are excluded
/// from means and counted.
pub fn evaluate_corpus(
    records: &[EvalRecord],
    embedder: &dyn Embedder,
    weights: &FeasibilityWeights,
) -> Result<CorpusReport> {
    let sessions = records
        .iter()
        .map(|r| evaluate_record(r, embedder, weights))
        .collect::<Result<Vec<_>>>()?;
    let summary = Metric::ALL
        .into_iter()
        .map(|metric| {
            let mut values = Vec::new();
            let mut undefined = 0;
            for row in &sessions {
                match row.metrics.get(&metric) {
                    Some(Cell::Value { value }) => values.push(*value),
                    Some(Cell::Undefined { .. }) => undefined += 1,
                    None => {}
                }
            }
            MetricSummary {
                metric,
                mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                defined: values.len(),
                undefined,
            }
        })
        .collect();
    Ok(CorpusReport { sessions, summary })
}

impl CorpusReport {
    /// Tab-separated table: one row per session, then `mean`, `defined` and
    /// `undefined` rows. Missing metrics are `-`, undefined ones `undef`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("session\ttask");
        for m in Metric::ALL {
            out.push('\t');
            out.push_str(m.as_str());
        }
        out.push('\n');
        for row in &self.sessions {
            let _ = write!(out, "{}\t{}", row.session_id, row.task);
            for m in Metric::ALL {
                match row.metrics.get(&m) {
                    Some(Cell::Value { value }) => {
                        let _ = write!(out, "\t{value:.4}");
                    }
                    Some(Cell::Undefined { .. }) => out.push_str("\tundef"),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out.push_str("mean\t*");
        for s in &self.summary {
            match s.mean {
                Some(v) => {
                    let _ = write!(out, "\t{v:.4}");
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
        for (label, pick) in [("defined", true), ("undefined", false)] {
            let _ = write!(out, "{label}\t*");
            for s in &self.summary {
                let _ = write!(out, "\t{}", if pick { s.defined } else { s.undefined });
            }
            out.push('\n');
        }
        out
    }
}

/// Reads every `*.json` file in a directory as an [`EvalRecord`], in file
/// name order.
pub fn load_eval_records(dir: &Path) -> Result<Vec<EvalRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::format(p, e.line(), e.to_string()))
        })
        .collect()
}
