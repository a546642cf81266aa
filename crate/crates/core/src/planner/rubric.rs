use serde::{Deserialize, Serialize};
use tracing::warn;

use super::search::plan_key;
use super::{Plan, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::{stage, Gateway};
use crate::memory::PatientProfile;

/// Criterion names in weight order.
pub const CRITERIA: [&str; 5] = [
    "task_alignment",
    "safety_compliance",
    "logical_order",
    "operability",
    "conciseness",
];

/// Weights of the five rubric criteria; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RubricWeights(pub [f64; 5]);

impl Default for RubricWeights {
    fn default() -> Self {
        RubricWeights([0.30, 0.25, 0.20, 0.15, 0.10])
    }
}

impl RubricWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("rubric weights must be finite and non-negative".into()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("rubric weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricScore {
    pub task_alignment: f64,
    pub safety_compliance: f64,
    pub logical_order: f64,
    pub operability: f64,
    pub conciseness: f64,
    pub total: f64,
}

impl RubricScore {
    /// Clamps each sub-score into [0, 1] and computes the weighted total.
    pub fn from_subscores(sub: [f64; 5], weights: &RubricWeights) -> Self {
        let f = sub.map(|x| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) });
        let total = f
            .iter()
            .zip(weights.0.iter())
            .fold(0.0, |acc, (fi, wi)| acc + wi * fi)
            .clamp(0.0, 1.0);
        RubricScore {
            task_alignment: f[0],
            safety_compliance: f[1],
            logical_order: f[2],
            operability: f[3],
            conciseness: f[4],
            total,
        }
    }

    pub fn zero() -> Self {
        Self::from_subscores([0.0; 5], &RubricWeights::default())
    }

    pub fn subscores(&self) -> [f64; 5] {
        [
            self.task_alignment,
            self.safety_compliance,
            self.logical_order,
            self.operability,
            self.conciseness,
        ]
    }
}

/// Result of scoring one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: RubricScore,
    /// Set when the evaluator's answer was unreadable and the plan scored 0.
    pub flagged: bool,
}

fn criterion_index(key: &str) -> Option<usize> {
    let key: String = key
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    let key = key.trim_matches('_');
    match key {
        "task_alignment" | "task" | "alignment" => Some(0),
        "safety_compliance" | "safety" => Some(1),
        "logical_order" | "logic" | "order" => Some(2),
        "operability" | "oper" | "feasibility" => Some(3),
        "conciseness" | "clarity" | "concision" => Some(4),
        _ => None,
    }
}

/// Parses five `criterion: value` lines in any order. Lines that do not name
/// a criterion are ignored; every criterion must appear exactly once.
pub fn parse_rubric(text: &str) -> std::result::Result<[f64; 5], String> {
    let mut out: [Option<f64>; 5] = [None; 5];
    for line in text.lines() {
        let Some((key, value)) = line.split_once(':').or_else(|| line.split_once('=')) else {
            continue;
        };
        let Some(i) = criterion_index(key) else {
            continue;
        };
        let token = value
            .trim()
            .split(|c: char| c.is_whitespace() || c == '/' || c == ',')
            .next()
            .unwrap_or("");
        let v: f64 = token
            .parse()
            .map_err(|_| format!("`{}` is not a number", token))?;
        if !v.is_finite() {
            return Err(format!("{} is not finite", CRITERIA[i]));
        }
        if out[i].replace(v).is_some() {
            return Err(format!("{} given twice", CRITERIA[i]));
        }
    }
    let mut sub = [0.0; 5];
    for (i, v) in out.iter().enumerate() {
        sub[i] = v.ok_or_else(|| format!("missing {}", CRITERIA[i]))?;
    }
    Ok(sub)
}

fn evaluation_prompt(plan: &Plan, patient: &PatientProfile, task: TaskKind) -> String {
    format!(
        "Score the candidate surgical plan against five criteria, each a number between 0 and 1.\n\
         Patient: {}\n\
         Task: {} ({})\n\
         {}\
         Criteria:\n\
         - task_alignment: does the plan address the central surgical goal\n\
         - safety_compliance: sterile technique, bleeding and infection control\n\
         - logical_order: steps respect their temporal dependencies\n\
         - operability: steps are concrete and feasible\n\
         - conciseness: instructions are clear and brief\n\
         Reply with exactly five lines of the form `criterion: score`.",
        patient.basic_info.render(),
        task.as_str(),
        task.role(),
        plan_key(&plan.texts()),
    )
}

/// Scores a plan with the evaluator backend. The weighted total is always
/// computed here from the parsed sub-scores.
pub fn evaluate_plan(
    plan: &Plan,
    patient: &PatientProfile,
    task: TaskKind,
    weights: &RubricWeights,
    gateway: &Gateway,
) -> Result<Evaluation> {
    if plan.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty plan".into()));
    }
    let prompt = evaluation_prompt(plan, patient, task);
    let first = gateway.complete(stage::EVALUATE, &prompt)?;
    let err = match parse_rubric(&first.text) {
        Ok(sub) => {
            return Ok(Evaluation {
                score: RubricScore::from_subscores(sub, weights),
                flagged: false,
            })
        }
        Err(e) => e,
    };
    let retry = format!(
        "{prompt}\nYour previous answer could not be read ({err}). \
         Answer again with exactly five `criterion: score` lines."
    );
    let second = gateway.complete(stage::EVALUATE, &retry)?;
    match parse_rubric(&second.text) {
        Ok(sub) => Ok(Evaluation {
            score: RubricScore::from_subscores(sub, weights),
            flagged: false,
        }),
        Err(e) => {
            warn!(error = %e, "evaluator response unreadable after reprompt; scoring plan 0");
            Ok(Evaluation {
                score: RubricScore::from_subscores([0.0; 5], weights),
                flagged: true,
            })
        }
    }
}
