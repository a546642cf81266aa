use chrono::{TimeZone, Utc};
use periop_core::aggregation::{
    AggregatedSummary, AggregationMode, Check, CheckDimension, Directive, Feedback, FinalOutput, ReflectedSummary,
    Section, Verdict,
};
use periop_core::planner::TaskKind;
use periop_core::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{engine, ensure, run_fixture, SEED};
use crate::Outcome;

const HEADINGS: [&str; 5] = ["Plan", "Contraindications", "Perioperative Notes", "Lifestyle", "Rehab Plan"];
const WORDS: [&str; 6] = ["monitor", "hold", "resume", "check", "INR", "potassium"];

fn text(rng: &mut ChaCha8Rng, allow_empty: bool) -> String {
    let lo = if allow_empty { 0 } else { 1 };
    let n = rng.gen_range(lo..=4);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn reflected(rng: &mut ChaCha8Rng) -> ReflectedSummary {
    let mut headings = HEADINGS.to_vec();
    headings.shuffle(rng);
    headings.truncate(rng.gen_range(1..=4));
    let sections = headings.iter().map(|h| Section::new(*h, text(rng, true))).collect();
    ReflectedSummary {
        summary: AggregatedSummary {
            task: TaskKind::Surgery,
            mode: AggregationMode::TaskAdaptive,
            sections,
            source_entry_ids: Vec::new(),
            flags: Vec::new(),
        },
        checks: CheckDimension::ALL
            .into_iter()
            .map(|dimension| Check {
                dimension,
                verdict: Verdict::Pass,
                note: String::new(),
            })
            .collect(),
        revised: false,
        original: None,
        recheck: None,
        flags: Vec::new(),
    }
}

fn directive(rng: &mut ChaCha8Rng) -> Directive {
    let heading = if rng.gen_bool(0.1) { "Missing Section" } else { HEADINGS.choose(rng).unwrap() };
    let target = match rng.gen_range(0..3) {
        0 => heading.to_lowercase(),
        1 => format!(" {heading} "),
        _ => heading.to_string(),
    };
    match rng.gen_range(0..3) {
        0 => Directive::append(&target, &text(rng, false)),
        1 => Directive::replace(&target, &text(rng, false)),
        _ => Directive::strike(&target),
    }
}

/// Independent merge: directives in order over (heading, text) pairs;
/// any unresolved target rejects the whole submission.
fn oracle(sections: &[(String, String)], directives: &[Directive]) -> Option<Vec<(String, String)>> {
    let mut out = sections.to_vec();
    for d in directives {
        let want = d.target.trim().to_lowercase();
        let i = out.iter().position(|(h, _)| h.to_lowercase() == want)?;
        let body = d.text.clone().unwrap_or_default();
        match d.action {
            periop_core::aggregation::Action::Append => {
                let t = &mut out[i].1;
                *t = if t.is_empty() { body } else { format!("{t}\n{body}") };
            }
            periop_core::aggregation::Action::Replace => out[i].1 = body,
            periop_core::aggregation::Action::Strike => {
                out.remove(i);
            }
        }
    }
    Some(out)
}

fn pairs(sections: &[Section]) -> Vec<(String, String)> {
    sections.iter().map(|s| (s.heading.clone(), s.text.clone())).collect()
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let (mut rejected, mut duplicates, mut applied) = (0, 0, 0);
    for case in 0..1000 {
        let base = FinalOutput::new("s1", reflected(&mut rng));
        ensure(base.final_sections == base.reflected.summary.sections && base.audit_trail.is_empty(), || {
            format!("case {case}: output without feedback differs from the reflected summary")
        })?;
        let empty = Feedback {
            feedback_id: "empty".into(),
            session_id: "s1".into(),
            author_role: "clinician".into(),
            directives: Vec::new(),
            submitted_at: at,
        };
        let same = base.apply(&empty).map_err(|e| e.to_string())?;
        ensure(same.final_sections == base.final_sections && same.audit_trail.is_empty(), || {
            format!("case {case}: empty feedback changed the output")
        })?;

        let mut output = base;
        let mut model = pairs(&output.final_sections);
        let mut ids: Vec<String> = Vec::new();
        for round in 0..rng.gen_range(1..=3) {
            let reuse = !ids.is_empty() && rng.gen_bool(0.3);
            let feedback_id = if reuse { ids.choose(&mut rng).unwrap().clone() } else { format!("fb{round}") };
            let directives: Vec<Directive> = (0..rng.gen_range(0..=5)).map(|_| directive(&mut rng)).collect();
            let feedback = Feedback {
                feedback_id: feedback_id.clone(),
                session_id: "s1".into(),
                author_role: "clinician".into(),
                directives: directives.clone(),
                submitted_at: at,
            };
            let result = output.apply(&feedback);
            if reuse {
                duplicates += 1;
                let again = result.map_err(|e| format!("case {case}: duplicate id rejected: {e}"))?;
                ensure(again == output, || format!("case {case}: duplicate feedback id changed the output"))?;
                continue;
            }
            match (oracle(&model, &directives), result) {
                (None, Err(Error::InvalidTarget(_))) => rejected += 1,
                (Some(expected), Ok(next)) => {
                    ensure(pairs(&next.final_sections) == expected, || {
                        format!("case {case}: merge differs from the oracle for {directives:?}")
                    })?;
                    ensure(next.audit_trail.len() == output.audit_trail.len() + directives.len(), || {
                        format!("case {case}: audit trail not extended by one entry per directive")
                    })?;
                    let twice = next.apply(&feedback).map_err(|e| e.to_string())?;
                    ensure(twice == next, || format!("case {case}: reapplying the same feedback changed the output"))?;
                    model = expected;
                    ids.push(feedback_id);
                    output = next;
                    applied += 1;
                }
                (expected, got) => {
                    return Err(format!("case {case}: oracle {expected:?}, merge {:?}", got.map(|o| pairs(&o.final_sections))))
                }
            }
        }
    }

    let state = run_fixture(&engine(), 2, &[]);
    let output = state.output.as_ref().ok_or("fixture session has no output")?;
    let reflected = state.reflected.as_ref().ok_or("fixture session has no reflection")?;
    ensure(output.final_sections == reflected.summary.sections && output.applied_feedback.is_empty(), || {
        "finalized fixture session without feedback differs from its reflected summary".into()
    })?;

    Ok(format!(
        "1000 cases: zero feedback is identity, {applied} submissions match the merge oracle, \
         {duplicates} duplicate ids and re-applications are no-ops, {rejected} invalid submissions rejected whole"
    ))
}
