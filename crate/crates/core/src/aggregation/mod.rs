//! Task-level synthesis of working memory, a single reflective check with
//! at most one revision, and the clinician feedback merge.

mod feedback;
mod reflect;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::gateway::{stage, Gateway};
use crate::memory::{MemoryEntry, WorkingMemory};
use crate::planner::TaskKind;

pub use feedback::{apply_feedback, Action, AuditEntry, Directive, Feedback, FinalOutput};
pub use reflect::{reflect, Check, CheckDimension, ReflectedSummary, Verdict};

/// Heading used by the unified (non task-adaptive) aggregation.
pub const UNIFIED_HEADING: &str = "Unified Summary";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub text: String,
}

impl Section {
    pub fn new(heading: impl Into<String>, text: impl Into<String>) -> Self {
        Section {
            heading: heading.into(),
            text: text.into(),
        }
    }
}

/// Section headings for each task kind.
pub fn template(task: TaskKind) -> [&'static str; 3] {
    match task {
        TaskKind::Analysis => ["Case Summary", "Diagnostic Risks", "Recommendations"],
        TaskKind::Surgery => ["Plan", "Contraindications", "Perioperative Notes"],
        TaskKind::Safety => ["Monitoring Targets", "Early Warnings", "Protective Measures"],
        TaskKind::Risk => ["Potential Complications", "Adverse Event Prediction", "Preventive Guidance"],
        TaskKind::Rehab => ["Rehab Plan", "Lifestyle", "Follow-up Schedule"],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    #[default]
    TaskAdaptive,
    Unified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSummary {
    pub task: TaskKind,
    pub mode: AggregationMode,
    pub sections: Vec<Section>,
    /// Every working-memory entry the synthesis consumed, in memory order.
    pub source_entry_ids: Vec<String>,
    /// `unsynthesized` when the backend failed and entries were concatenated;
    /// `missing:<heading>` for template sections the backend left out.
    #[serde(default)]
    pub flags: Vec<String>,
}

impl AggregatedSummary {
    pub fn section(&self, heading: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.heading.eq_ignore_ascii_case(heading))
    }

    pub fn headings(&self) -> Vec<&str> {
        self.sections.iter().map(|s| s.heading.as_str()).collect()
    }

    pub fn is_unsynthesized(&self) -> bool {
        self.flags.iter().any(|f| f == "unsynthesized")
    }

    /// Markdown-style rendering used in prompts and CLI output.
    pub fn render(&self) -> String {
        render_sections(&self.sections)
    }
}

pub fn render_sections(sections: &[Section]) -> String {
    let mut out = String::new();
    for s in sections {
        out.push_str("## ");
        out.push_str(&s.heading);
        out.push('\n');
        out.push_str(&s.text);
        out.push_str("\n\n");
    }
    out.truncate(out.trim_end().len());
    out
}

/// Splits `## Heading` blocks. Text before the first heading is ignored;
/// repeated headings are merged.
pub fn parse_sections(text: &str) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    let flush = |cur: Option<(String, Vec<&str>)>, sections: &mut Vec<Section>| {
        if let Some((heading, lines)) = cur {
            let body = lines.join("\n").trim().to_string();
            match sections.iter_mut().find(|s| s.heading.eq_ignore_ascii_case(&heading)) {
                Some(s) if !body.is_empty() => {
                    if !s.text.is_empty() {
                        s.text.push('\n');
                    }
                    s.text.push_str(&body);
                }
                Some(_) => {}
                None => sections.push(Section::new(heading, body)),
            }
        }
    };
    for line in text.lines() {
        if let Some(h) = line.trim_start().strip_prefix("## ") {
            flush(current.take(), &mut sections);
            current = Some((h.trim().trim_end_matches(':').to_string(), Vec::new()));
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        }
    }
    flush(current, &mut sections);
    sections.retain(|s| !s.heading.is_empty());
    sections
}

fn entry_line(e: &MemoryEntry) -> String {
    format!("[{}] {} (step {}): {}", e.entry_id, e.author, e.step + 1, e.content)
}

/// Fallback and ablation rendering: entries grouped under one heading per
/// author, authors in first-appearance order.
fn grouped_by_author(entries: &[MemoryEntry]) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for e in entries {
        let heading = e.author.to_string();
        let line = format!("[{}] (step {}) {}", e.entry_id, e.step + 1, e.content);
        match sections.iter_mut().find(|s| s.heading == heading) {
            Some(s) => {
                s.text.push('\n');
                s.text.push_str(&line);
            }
            None => sections.push(Section::new(heading, line)),
        }
    }
    sections
}

fn canonicalize(task: TaskKind, mut sections: Vec<Section>) -> (Vec<Section>, Vec<String>) {
    let headings = template(task);
    for s in &mut sections {
        if let Some(h) = headings.iter().find(|h| h.eq_ignore_ascii_case(&s.heading)) {
            s.heading = h.to_string();
        }
    }
    let flags = headings
        .iter()
        .filter(|h| !sections.iter().any(|s| s.heading == **h))
        .map(|h| format!("missing:{h}"))
        .collect();
    (sections, flags)
}

/// Synthesizes the working memory into a sectioned summary.
///
/// Task-adaptive mode asks the backend to fill the task template; a backend
/// failure or a response without any `## ` section falls back to entries
/// grouped by agent, flagged `unsynthesized`. Unified mode makes no backend
/// call and puts every entry under one heading.
pub fn aggregate(
    task: TaskKind,
    working: &WorkingMemory,
    mode: AggregationMode,
    gateway: &Gateway,
) -> Result<AggregatedSummary> {
    let entries = working.entries();
    if entries.is_empty() {
        return Err(Error::InvalidArgument("working memory has no agent entries to aggregate".into()));
    }
    let source_entry_ids: Vec<String> = entries.iter().map(|e| e.entry_id.clone()).collect();

    if mode == AggregationMode::Unified {
        let text: Vec<String> = entries.iter().map(entry_line).collect();
        return Ok(AggregatedSummary {
            task,
            mode,
            sections: vec![Section::new(UNIFIED_HEADING, text.join("\n"))],
            source_entry_ids,
            flags: Vec::new(),
        });
    }

    let headings = template(task);
    let mut prompt = format!(
        "You are the {} agent. Synthesize the team's contributions below into one report.\n\
         Use exactly these sections, each introduced by a line `## <heading>`: {}.\n\
         Contributions:\n",
        task.as_str(),
        headings.join(", ")
    );
    for e in entries {
        prompt.push_str(&entry_line(e));
        prompt.push('\n');
    }

    let sections = match gateway.complete(stage::AGGREGATE, &prompt) {
        Ok(c) => {
            let parsed = parse_sections(&c.text);
            if parsed.is_empty() {
                warn!("aggregation response had no sections; concatenating entries");
            }
            parsed
        }
        Err(e) => {
            warn!(error = %e, "aggregation failed; concatenating entries");
            Vec::new()
        }
    };
    if sections.is_empty() {
        return Ok(AggregatedSummary {
            task,
            mode,
            sections: grouped_by_author(entries),
            source_entry_ids,
            flags: vec!["unsynthesized".into()],
        });
    }
    let (sections, flags) = canonicalize(task, sections);
    Ok(AggregatedSummary {
        task,
        mode,
        sections,
        source_entry_ids,
        flags,
    })
}
