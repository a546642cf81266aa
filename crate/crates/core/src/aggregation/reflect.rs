use std::fmt;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{canonicalize, parse_sections, AggregatedSummary};
use crate::gateway::{stage, Gateway};
use crate::util::strip_list_marker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckDimension {
    Consistency,
    Safety,
    Completeness,
}

impl CheckDimension {
    pub const ALL: [CheckDimension; 3] = [
        CheckDimension::Consistency,
        CheckDimension::Safety,
        CheckDimension::Completeness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckDimension::Consistency => "consistency",
            CheckDimension::Safety => "safety",
            CheckDimension::Completeness => "completeness",
        }
    }
}

impl fmt::Display for CheckDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub dimension: CheckDimension,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedSummary {
    /// The summary after reflection (the revision when one was made).
    pub summary: AggregatedSummary,
    /// Verdicts on the aggregated summary, one per dimension.
    pub checks: Vec<Check>,
    pub revised: bool,
    /// The pre-revision summary, kept when `revised` is true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<AggregatedSummary>,
    /// Verdicts on the revision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck: Option<Vec<Check>>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl ReflectedSummary {
    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Fail)
    }
}

fn unchecked(note: &str) -> Vec<Check> {
    CheckDimension::ALL
        .into_iter()
        .map(|dimension| Check {
            dimension,
            verdict: Verdict::Unchecked,
            note: note.to_string(),
        })
        .collect()
}

/// Reads `dimension: pass|fail - note` lines. All three dimensions must be
/// present; the first line for a dimension wins.
pub(crate) fn parse_checks(text: &str) -> Option<Vec<Check>> {
    let mut found: [Option<Check>; 3] = [None, None, None];
    for line in text.lines() {
        let line = strip_list_marker(line);
        let lower = line.to_ascii_lowercase();
        let Some((i, dim)) = CheckDimension::ALL
            .iter()
            .enumerate()
            .find(|(_, d)| lower.starts_with(d.as_str()))
        else {
            continue;
        };
        if found[i].is_some() {
            continue;
        }
        let rest = lower[dim.as_str().len()..].trim_start_matches([':', '=', ' ', '\t']);
        let verdict = if rest.starts_with("pass") {
            Verdict::Pass
        } else if rest.starts_with("fail") {
            Verdict::Fail
        } else {
            continue;
        };
        let offset = line.len() - rest.len() + 4;
        let note = line[offset..]
            .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '-' | ':' | '|' | ',' | '.'))
            .trim()
            .to_string();
        found[i] = Some(Check {
            dimension: *dim,
            verdict,
            note,
        });
    }
    found.into_iter().collect()
}

fn check_prompt(summary: &AggregatedSummary) -> String {
    format!(
        "Review this perioperative {} report for logical consistency, safety and completeness.\n\
         {}\n\
         Answer with exactly three lines of the form `<dimension>: pass|fail - <note>` \
         for consistency, safety and completeness.",
        summary.task.as_str(),
        summary.render()
    )
}

fn run_checks(summary: &AggregatedSummary, gateway: &Gateway) -> Option<Vec<Check>> {
    let prompt = check_prompt(summary);
    match gateway.complete(stage::REFLECT_CHECK, &prompt) {
        Ok(c) => {
            let parsed = parse_checks(&c.text);
            if parsed.is_none() {
                warn!("reflection verdicts unreadable; marking unchecked");
            }
            parsed
        }
        Err(e) => {
            warn!(error = %e, "reflection check failed; marking unchecked");
            None
        }
    }
}

/// One reflective pass. Any failed dimension triggers exactly one revision,
/// which is checked again; the original summary is archived.
pub fn reflect(summary: &AggregatedSummary, gateway: &Gateway) -> ReflectedSummary {
    let Some(checks) = run_checks(summary, gateway) else {
        return ReflectedSummary {
            summary: summary.clone(),
            checks: unchecked("reflection unavailable"),
            revised: false,
            original: None,
            recheck: None,
            flags: vec!["unchecked".into()],
        };
    };
    let failed: Vec<&Check> = checks.iter().filter(|c| c.verdict == Verdict::Fail).collect();
    if failed.is_empty() {
        return ReflectedSummary {
            summary: summary.clone(),
            checks,
            revised: false,
            original: None,
            recheck: None,
            flags: Vec::new(),
        };
    }

    let mut prompt = format!(
        "Revise this perioperative {} report to fix the problems listed. Keep the same `## ` sections.\n{}\nProblems:\n",
        summary.task.as_str(),
        summary.render()
    );
    for c in &failed {
        prompt.push_str(&format!("- {}: {}\n", c.dimension, c.note));
    }
    let sections = match gateway.complete(stage::REFLECT_REVISE, &prompt) {
        Ok(c) => parse_sections(&c.text),
        Err(e) => {
            warn!(error = %e, "revision failed; keeping the aggregated summary");
            Vec::new()
        }
    };
    if sections.is_empty() {
        return ReflectedSummary {
            summary: summary.clone(),
            checks,
            revised: false,
            original: None,
            recheck: None,
            flags: vec!["revision-failed".into()],
        };
    }

    let (sections, missing) = canonicalize(summary.task, sections);
    let mut revision = summary.clone();
    revision.sections = sections;
    revision.flags.retain(|f| !f.starts_with("missing:"));
    revision.flags.extend(missing);
    let mut flags = Vec::new();
    let recheck = match run_checks(&revision, gateway) {
        Some(r) => r,
        None => {
            flags.push("recheck-unchecked".into());
            unchecked("recheck unavailable")
        }
    };
    ReflectedSummary {
        summary: revision,
        checks,
        revised: true,
        original: Some(summary.clone()),
        recheck: Some(recheck),
        flags,
    }
}
