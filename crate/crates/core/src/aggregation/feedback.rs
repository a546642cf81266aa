use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ReflectedSummary, Section};
use crate::error::{Error, Result};
use crate::planner::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Append,
    Replace,
    Strike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directive {
    /// Section heading, matched case-insensitively.
    pub target: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Directive {
    pub fn append(target: &str, text: &str) -> Self {
        Directive {
            target: target.into(),
            action: Action::Append,
            text: Some(text.into()),
        }
    }

    pub fn replace(target: &str, text: &str) -> Self {
        Directive {
            target: target.into(),
            action: Action::Replace,
            text: Some(text.into()),
        }
    }

    pub fn strike(target: &str) -> Self {
        Directive {
            target: target.into(),
            action: Action::Strike,
            text: None,
        }
    }
}

fn default_role() -> String {
    "clinician".into()
}

/// One clinician submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub feedback_id: String,
    pub session_id: String,
    #[serde(default = "default_role")]
    pub author_role: String,
    pub directives: Vec<Directive>,
    pub submitted_at: DateTime<Utc>,
}

impl Feedback {
    /// Shape checks that need no document: ids present, strike without
    /// text, append and replace with non-empty text.
    pub fn validate(&self) -> Result<()> {
        if self.feedback_id.trim().is_empty() {
            return Err(Error::InvalidFeedback("feedback_id is empty".into()));
        }
        for (i, d) in self.directives.iter().enumerate() {
            if d.target.trim().is_empty() {
                return Err(Error::InvalidFeedback(format!("directive {i} has no target")));
            }
            match (d.action, d.text.as_deref()) {
                (Action::Strike, Some(_)) => {
                    return Err(Error::InvalidFeedback(format!("directive {i}: strike carries no text")))
                }
                (Action::Append | Action::Replace, None) => {
                    return Err(Error::InvalidFeedback(format!("directive {i}: text is required")))
                }
                (Action::Append | Action::Replace, Some(t)) if t.trim().is_empty() => {
                    return Err(Error::InvalidFeedback(format!("directive {i}: text is empty")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One applied directive with the section text it replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: usize,
    pub feedback_id: String,
    pub directive_index: usize,
    pub target: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub pre_image: String,
    /// Absent for strikes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutput {
    pub session_id: String,
    pub task: TaskKind,
    pub reflected: ReflectedSummary,
    pub applied_feedback: Vec<Feedback>,
    pub final_sections: Vec<Section>,
    pub audit_trail: Vec<AuditEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized_at: Option<DateTime<Utc>>,
}

impl FinalOutput {
    /// The output before any feedback: sections equal the reflected ones.
    pub fn new(session_id: impl Into<String>, reflected: ReflectedSummary) -> Self {
        FinalOutput {
            session_id: session_id.into(),
            task: reflected.summary.task,
            final_sections: reflected.summary.sections.clone(),
            reflected,
            applied_feedback: Vec::new(),
            audit_trail: Vec::new(),
            finalized_at: None,
        }
    }

    pub fn section(&self, heading: &str) -> Option<&Section> {
        self.final_sections.iter().find(|s| s.heading.eq_ignore_ascii_case(heading))
    }

    pub fn has_applied(&self, feedback_id: &str) -> bool {
        self.applied_feedback.iter().any(|f| f.feedback_id == feedback_id)
    }

    /// Applies one submission, all or nothing. A feedback id that was
    /// already applied leaves the output unchanged.
    pub fn apply(&self, feedback: &Feedback) -> Result<FinalOutput> {
        if self.finalized_at.is_some() {
            return Err(Error::IllegalTransition("output is finalized".into()));
        }
        if feedback.session_id != self.session_id {
            return Err(Error::InvalidFeedback(format!(
                "feedback is for session `{}`, not `{}`",
                feedback.session_id, self.session_id
            )));
        }
        feedback.validate()?;
        if self.has_applied(&feedback.feedback_id) {
            return Ok(self.clone());
        }

        let mut sections = self.final_sections.clone();
        let mut audit = Vec::with_capacity(feedback.directives.len());
        for (i, d) in feedback.directives.iter().enumerate() {
            let idx = sections
                .iter()
                .position(|s| s.heading.eq_ignore_ascii_case(d.target.trim()))
                .ok_or_else(|| Error::InvalidTarget(d.target.clone()))?;
            let pre_image = sections[idx].text.clone();
            let post_image = match d.action {
                Action::Append => {
                    let suffix = d.text.as_deref().unwrap_or_default();
                    let s = &mut sections[idx];
                    if !s.text.is_empty() {
                        s.text.push('\n');
                    }
                    s.text.push_str(suffix);
                    Some(s.text.clone())
                }
                Action::Replace => {
                    sections[idx].text = d.text.clone().unwrap_or_default();
                    Some(sections[idx].text.clone())
                }
                Action::Strike => {
                    sections.remove(idx);
                    None
                }
            };
            audit.push(AuditEntry {
                seq: self.audit_trail.len() + i + 1,
                feedback_id: feedback.feedback_id.clone(),
                directive_index: i,
                target: d.target.clone(),
                action: d.action,
                text: d.text.clone(),
                pre_image,
                post_image,
            });
        }

        let mut out = self.clone();
        out.final_sections = sections;
        out.audit_trail.extend(audit);
        out.applied_feedback.push(feedback.clone());
        Ok(out)
    }
}

/// Free-function form of [`FinalOutput::apply`].
pub fn apply_feedback(output: &FinalOutput, feedback: &Feedback) -> Result<FinalOutput> {
    output.apply(feedback)
}
