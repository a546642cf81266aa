//! Long-term memory: patient profiles, daily records, lab panels and
//! exemplar cases, each with a precomputed embedding.
//!
//! A raw corpus is a directory of JSON Lines files (`patients.jsonl`,
//! `records.jsonl`, `labs.jsonl`, `cases.jsonl`), one document per line.
//! Missing files are treated as empty. Ingestion embeds every item and the
//! result can be persisted as a single store document.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::embed::{Embedder, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasicInfo {
    pub age: u32,
    pub sex: String,
    pub admission_reason: String,
    pub history_summary: String,
    #[serde(default)]
    pub region: String,
    #[serde(default)]
    pub occupation: String,
    #[serde(default)]
    pub blood_type: String,
}

impl BasicInfo {
    /// One-line rendering used inside prompts.
    pub fn render(&self) -> String {
        let mut parts = vec![
            format!("age {}", self.age),
            format!("sex {}", self.sex),
            format!("admitted for {}", self.admission_reason),
            format!("history: {}", self.history_summary),
        ];
        for (label, value) in [
            ("region", &self.region),
            ("occupation", &self.occupation),
            ("blood type", &self.blood_type),
        ] {
            if !value.is_empty() {
                parts.push(format!("{label} {value}"));
            }
        }
        parts.join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientProfile {
    pub patient_id: String,
    pub basic_info: BasicInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub record_id: String,
    pub patient_id: String,
    pub date: NaiveDate,
    pub text: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarCase {
    pub case_id: String,
    pub summary: String,
    /// Standardized workflow steps.
    pub steps: Vec<String>,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabValue {
    Number(f64),
    Text(String),
}

impl LabValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            LabValue::Number(x) => Some(*x),
            LabValue::Text(_) => None,
        }
    }
}

impl fmt::Display for LabValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabValue::Number(x) => write!(f, "{x}"),
            LabValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabItem {
    pub name: String,
    pub value: LabValue,
    #[serde(default)]
    pub unit: String,
    /// Inclusive `[low, high]`.
    #[serde(default)]
    pub reference_range: Option<[f64; 2]>,
    pub abnormal: bool,
}

impl LabItem {
    /// Abnormality implied by range arithmetic, when it can be decided.
    pub fn range_verdict(&self) -> Option<bool> {
        let v = self.value.as_number()?;
        let [lo, hi] = self.reference_range?;
        Some(v < lo || v > hi)
    }

    pub fn is_consistent(&self) -> bool {
        self.range_verdict().is_none_or(|v| v == self.abnormal)
    }
}

/// All lab results of one patient (one `labs.jsonl` document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabPanel {
    pub panel_id: String,
    pub patient_id: String,
    pub items: Vec<LabItem>,
    pub embedding: Embedding,
}

/// The persistent store. Immutable after load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LongTermMemory {
    pub dim: usize,
    pub patients: Vec<PatientProfile>,
    pub cases: Vec<ExemplarCase>,
    pub records: Vec<ClinicalRecord>,
    pub labs: Vec<LabPanel>,
}

impl LongTermMemory {
    pub fn patient(&self, patient_id: &str) -> Option<&PatientProfile> {
        self.patients.iter().find(|p| p.patient_id == patient_id)
    }

    pub fn records_for(&self, patient_id: &str) -> Vec<&ClinicalRecord> {
        self.records.iter().filter(|r| r.patient_id == patient_id).collect()
    }

    pub fn labs_for(&self, patient_id: &str) -> Vec<LabItem> {
        self.labs
            .iter()
            .filter(|p| p.patient_id == patient_id)
            .flat_map(|p| p.items.iter().cloned())
            .collect()
    }

    pub fn record(&self, record_id: &str) -> Option<&ClinicalRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn case(&self, case_id: &str) -> Option<&ExemplarCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Writes the store as one JSON document.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Loads a persisted store document.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let store: LongTermMemory = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, e.line(), e.to_string()))?;
        store.check_dimensions(path)?;
        Ok(store)
    }

    fn check_dimensions(&self, path: &Path) -> Result<()> {
        let dims = self
            .records
            .iter()
            .map(|r| (&r.record_id, r.embedding.dim()))
            .chain(self.cases.iter().map(|c| (&c.case_id, c.embedding.dim())))
            .chain(self.labs.iter().map(|l| (&l.panel_id, l.embedding.dim())));
        for (id, dim) in dims {
            if dim != self.dim {
                return Err(Error::format(
                    path,
                    0,
                    format!("`{id}` has embedding dimension {dim}, store declares {}", self.dim),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of ingesting a raw corpus directory.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub store: LongTermMemory,
    /// Rejected lab rows and similar non-fatal problems.
    pub diagnostics: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    record_id: String,
    patient_id: String,
    date: NaiveDate,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    case_id: String,
    summary: String,
    steps: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabDocument {
    patient_id: String,
    rows: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabRow {
    name: String,
    value: LabValue,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    range_low: Option<f64>,
    #[serde(default)]
    range_high: Option<f64>,
    abnormal: bool,
}

impl RawLabRow {
    fn validate(self) -> std::result::Result<LabItem, String> {
        if self.name.trim().is_empty() {
            return Err("empty test name".into());
        }
        let reference_range = match (self.range_low, self.range_high) {
            (None, None) => None,
            (Some(lo), Some(hi)) if lo <= hi => Some([lo, hi]),
            (Some(lo), Some(hi)) => return Err(format!("range_low {lo} exceeds range_high {hi}")),
            _ => return Err("reference range needs both range_low and range_high".into()),
        };
        let item = LabItem {
            name: self.name.trim().to_string(),
            value: self.value,
            unit: self.unit,
            reference_range,
            abnormal: self.abnormal,
        };
        if let (false, Some([lo, hi])) = (item.is_consistent(), reference_range) {
            return Err(format!(
                "abnormal flag {} contradicts value {} against range {lo}-{hi}",
                item.abnormal, item.value
            ));
        }
        Ok(item)
    }
}

/// Reads a JSON Lines file, naming the offending line and document on error.
fn read_jsonl<T: DeserializeOwned>(path: &Path, id_field: &str) -> Result<Vec<(usize, T)>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::format(path, lineno, format!("invalid JSON: {e}")))?;
        let name = value
            .get(id_field)
            .and_then(|v| v.as_str())
            .map(|s| format!("`{s}`"))
            .unwrap_or_else(|| "document".to_string());
        let doc = serde_json::from_value(value)
            .map_err(|e| Error::format(path, lineno, format!("{name}: {e}")))?;
        out.push((lineno, doc));
    }
    Ok(out)
}

fn ensure_unique(path: &Path, line: usize, seen: &mut HashSet<String>, kind: &str, id: &str) -> Result<()> {
    if id.trim().is_empty() {
        return Err(Error::format(path, line, format!("empty {kind} id")));
    }
    if !seen.insert(id.to_string()) {
        return Err(Error::format(path, line, format!("duplicate {kind} id `{id}`")));
    }
    Ok(())
}

/// Ingests a raw corpus directory, embedding every item.
pub fn ingest_corpus(dir: &Path, embedder: &dyn Embedder) -> Result<IngestReport> {
    let mut store = LongTermMemory {
        dim: embedder.dim(),
        ..Default::default()
    };
    let mut diagnostics = Vec::new();

    let path = dir.join("patients.jsonl");
    let mut seen = HashSet::new();
    for (line, p) in read_jsonl::<PatientProfile>(&path, "patient_id")? {
        ensure_unique(&path, line, &mut seen, "patient", &p.patient_id)?;
        store.patients.push(p);
    }
    let known_patient = |path: &Path, line: usize, id: &str| -> Result<()> {
        if seen.contains(id) {
            Ok(())
        } else {
            Err(Error::format(path, line, format!("unknown patient `{id}`")))
        }
    };

    let path = dir.join("records.jsonl");
    let mut ids = HashSet::new();
    for (line, r) in read_jsonl::<RawRecord>(&path, "record_id")? {
        ensure_unique(&path, line, &mut ids, "record", &r.record_id)?;
        known_patient(&path, line, &r.patient_id)?;
        let embedding = embedder.embed(&r.text)?;
        store.records.push(ClinicalRecord {
            record_id: r.record_id,
            patient_id: r.patient_id,
            date: r.date,
            text: r.text,
            embedding,
        });
    }

    let path = dir.join("labs.jsonl");
    for (line, doc) in read_jsonl::<RawLabDocument>(&path, "patient_id")? {
        known_patient(&path, line, &doc.patient_id)?;
        let mut items = Vec::new();
        for (j, row) in doc.rows.into_iter().enumerate() {
            let parsed = serde_json::from_value::<RawLabRow>(row)
                .map_err(|e| e.to_string())
                .and_then(RawLabRow::validate);
            match parsed {
                Ok(item) => items.push(item),
                Err(msg) => diagnostics.push(format!(
                    "{}:{line}: patient `{}` row {j} rejected: {msg}",
                    path.display(),
                    doc.patient_id
                )),
            }
        }
        let names: Vec<&str> = items.iter().map(|i| i.name.as_str()).collect();
        let embedding = embedder.embed(&names.join(" "))?;
        let n = store.labs.iter().filter(|p| p.patient_id == doc.patient_id).count();
        store.labs.push(LabPanel {
            panel_id: format!("labs-{}-{n}", doc.patient_id),
            patient_id: doc.patient_id,
            items,
            embedding,
        });
    }

    let path = dir.join("cases.jsonl");
    let mut ids = HashSet::new();
    for (line, c) in read_jsonl::<RawCase>(&path, "case_id")? {
        ensure_unique(&path, line, &mut ids, "case", &c.case_id)?;
        if c.steps.is_empty() || c.steps.iter().any(|s| s.trim().is_empty()) {
            return Err(Error::format(
                &path,
                line,
                format!("`{}`: workflow steps must be non-empty", c.case_id),
            ));
        }
        let embedding = embedder.embed(&format!("{} {}", c.summary, c.steps.join(" ")))?;
        store.cases.push(ExemplarCase {
            case_id: c.case_id,
            summary: c.summary,
            steps: c.steps,
            embedding,
        });
    }

    Ok(IngestReport { store, diagnostics })
}

/// Loads long-term memory from a raw corpus directory or a persisted store
/// file.
pub fn load_long_term(path: &Path, embedder: &dyn Embedder) -> Result<IngestReport> {
    if path.is_dir() {
        ingest_corpus(path, embedder)
    } else {
        let store = LongTermMemory::load(path)?;
        if store.dim != embedder.dim() {
            return Err(Error::Config(format!(
                "store dimension {} does not match embedder dimension {}",
                store.dim,
                embedder.dim()
            )));
        }
        Ok(IngestReport {
            store,
            diagnostics: Vec::new(),
        })
    }
}
