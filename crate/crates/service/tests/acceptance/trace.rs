use std::sync::Arc;

use periop_core::aggregation::{Directive, Feedback};
use periop_core::manager::{RunMode, SessionManager};
use periop_core::session::{Phase, SessionEvent, SessionState};

use crate::common::{engine, ensure, golden, to_json, SESSIONS};
use crate::Outcome;

/// Artifact kinds in the order their first occurrence must appear.
const ORDER: [&str; 23] = [
    "task.classified",
    "plan.candidates",
    "plan.scores",
    "plan.beam",
    "plan.selected",
    "step.started",
    "agents.allocated",
    "memory.query",
    "memory.record",
    "memory.cases",
    "agent.output",
    "memory.append",
    "lab.abnormal",
    "lab.selected",
    "lab.evidence",
    "lab.analysis",
    "aggregate",
    "reflect.check",
    "reflect.revise",
    "reflect.recheck",
    "review.opened",
    "feedback.applied",
    "output.finalized",
];

fn refs<'a>(state: &'a SessionState, kind: &'a str) -> Vec<&'a Vec<String>> {
    state.events_of(kind).map(|e| &e.refs).collect()
}

fn check_order(events: &[SessionEvent]) -> Result<(), String> {
    let mut last = 0;
    for kind in ORDER {
        let first = events
            .iter()
            .find(|e| e.kind == kind)
            .ok_or_else(|| format!("no `{kind}` artifact"))?;
        ensure(first.seq > last, || format!("`{kind}` (#{}) appears before its predecessor (#{last})", first.seq))?;
        last = first.seq;
    }
    ensure(
        events.iter().enumerate().all(|(i, e)| e.seq == i + 1),
        || "event sequence numbers are not contiguous".into(),
    )
}

fn check_search(state: &SessionState) -> Result<(), String> {
    let trace = state.trace.as_ref().ok_or("no search trace")?;
    let plan = state.plan.as_ref().ok_or("no plan")?;
    let candidates = refs(state, "plan.candidates");
    let scores = refs(state, "plan.scores");
    let beams = refs(state, "plan.beam");
    ensure(candidates.len() == trace.rounds.len() && beams.len() == trace.rounds.len(), || {
        "one candidates/beam artifact per search round".into()
    })?;
    for (i, round) in trace.rounds.iter().enumerate() {
        let depth = format!("depth={}", round.depth);
        let ids = |xs: &[u32]| std::iter::once(depth.clone()).chain(xs.iter().map(|x| format!("n{x}"))).collect::<Vec<_>>();
        ensure(*candidates[i] == ids(&round.candidates), || format!("round {i}: candidates differ"))?;
        ensure(*beams[i] == ids(&round.beam), || format!("round {i}: beam differs"))?;
        ensure(round.beam.iter().all(|b| round.candidates.contains(b)), || format!("round {i}: beam outside candidates"))?;
        ensure(round.beam.len() <= trace.beam_width, || format!("round {i}: beam wider than {}", trace.beam_width))?;
        for s in scores[i].iter().skip(1) {
            let (id, value) = s.split_once('=').ok_or("malformed score artifact")?;
            let id: u32 = id.trim_start_matches('n').parse().map_err(|_| "malformed node id")?;
            let node = trace.node(id).ok_or_else(|| format!("score for unknown node n{id}"))?;
            let total = node.score.as_ref().ok_or_else(|| format!("n{id} has no score"))?.total;
            ensure(format!("{total:.4}") == value, || format!("n{id}: artifact score {value}, node {total}"))?;
        }
    }
    let selected = refs(state, "plan.selected");
    ensure(selected == [&vec![format!("n{}", trace.best_id)]], || "selected node differs from the trace".into())?;
    let best = trace.node(trace.best_id).ok_or("best node missing")?;
    ensure(best.steps == plan.texts(), || "plan differs from the best node's path".into())
}

fn check_execution(state: &SessionState, engine: &periop_core::pipeline::Engine) -> Result<(), String> {
    let store = engine.store();
    let agents = &engine.config().agents;
    let started: Vec<String> = refs(state, "step.started").iter().map(|r| r.join(",")).collect();
    let expected: Vec<String> = (0..state.steps.len()).map(|i| format!("step={i}")).collect();
    ensure(started == expected, || format!("steps started {started:?}"))?;

    for (record, alloc) in state.steps.iter().zip(refs(state, "agents.allocated")) {
        let a = record.allocation.as_ref().ok_or("step without allocation")?;
        let names: Vec<String> = a.departments.iter().map(|d| d.to_string()).collect();
        ensure(*alloc == names, || format!("step {}: allocation artifact differs", record.step.index))?;
        ensure(record.agents.len() == names.len(), || "one output per allocated department".into())?;
    }

    for r in refs(state, "memory.record") {
        for id in r {
            let rec = store.records.iter().find(|x| &x.record_id == id).ok_or_else(|| format!("unknown record {id}"))?;
            ensure(rec.patient_id == state.patient_id, || format!("record {id} belongs to {}", rec.patient_id))?;
        }
    }
    let outputs: Vec<_> = state.steps.iter().flat_map(|s| &s.agents).collect();
    for out in &outputs {
        ensure(out.cited_cases.len() <= agents.max_cases, || "too many exemplar cases".into())?;
        for c in &out.cited_cases {
            ensure(store.cases.iter().any(|x| x.case_id == c.case_id), || format!("unknown case {}", c.case_id))?;
            ensure(c.similarity >= agents.delta, || format!("case {} below the threshold", c.case_id))?;
        }
    }

    let appended: Vec<&String> = refs(state, "memory.append").into_iter().flatten().collect();
    let entries: Vec<&String> = state.working.entries().iter().map(|e| &e.entry_id).collect();
    ensure(appended == entries, || "memory appends differ from working memory".into())?;

    for lab in state.steps.iter().filter_map(|s| s.lab.as_ref()) {
        ensure(lab.selected.iter().all(|s| lab.abnormal.contains(s)), || "selected lab item is not abnormal".into())?;
        ensure(lab.selected.len() <= agents.k_max, || "lab selection exceeds k_max".into())?;
        ensure(lab.analyses.len() == lab.selected.len(), || "one analysis per selected item".into())?;
    }

    let summary = state.summary.as_ref().ok_or("no aggregated summary")?;
    let source: Vec<&String> = summary.source_entry_ids.iter().collect();
    ensure(source == entries, || "aggregation did not consume every entry".into())
}

fn check_review(state: &SessionState, feedback: &Feedback) -> Result<(), String> {
    let reflected = state.reflected.as_ref().ok_or("no reflection")?;
    ensure(reflected.checks.len() == refs(state, "reflect.check")[0].len(), || "check artifact incomplete".into())?;
    ensure(reflected.revised && reflected.recheck.is_some(), || "fixture session should revise once".into())?;
    ensure(state.events_of("reflect.revise").count() == 1, || "more than one revision".into())?;

    let output = state.output.as_ref().ok_or("no output")?;
    let opened = refs(state, "review.opened")[0];
    let reflected_headings: Vec<String> = reflected.summary.headings().iter().map(|h| h.to_string()).collect();
    ensure(*opened == reflected_headings, || "review opened on a different summary".into())?;
    let applied = refs(state, "feedback.applied");
    ensure(applied.len() == 1, || format!("{} feedback artifacts", applied.len()))?;
    ensure(applied[0][0] == feedback.feedback_id, || "feedback id differs".into())?;
    ensure(output.audit_trail.len() == feedback.directives.len(), || "audit trail length".into())?;
    let target = &feedback.directives[0].target;
    let section = output.section(target).ok_or("feedback target missing")?;
    ensure(section.text.ends_with(feedback.directives[0].text.as_deref().unwrap()), || "append not applied".into())?;
    ensure(output.finalized_at.is_some() && state.phase == Phase::Finalized, || "not finalized".into())?;
    ensure(state.history_is_legal(), || "illegal transition history".into())
}

pub fn run() -> Outcome {
    let engine = Arc::new(engine());
    let manager = SessionManager::new(engine.clone(), None, RunMode::Inline);
    let (patient, task, name) = SESSIONS[0];
    let id = manager.create(patient, task, &[]).map_err(|e| e.to_string())?.session_id;
    manager.run(&id).map_err(|e| e.to_string())?;
    let feedback = Feedback {
        feedback_id: "fb-1".into(),
        session_id: id.clone(),
        author_role: "anesthesiologist".into(),
        directives: vec![Directive::append("Perioperative Notes", "Confirm type and crossmatch before incision.")],
        submitted_at: engine.clock().now(),
    };
    manager.submit_feedback(&id, &feedback).map_err(|e| e.to_string())?;
    manager.finalize(&id).map_err(|e| e.to_string())?;
    let state = manager.get_state(&id).map_err(|e| e.to_string())?;

    check_order(&state.events)?;
    check_search(&state)?;
    check_execution(&state, &engine)?;
    check_review(&state, &feedback)?;
    golden(&format!("{name}.reviewed.json"), &to_json(&state))?;
    Ok(format!(
        "{} artifacts in order across {} kinds; refs match plan, search trace, memory, lab, reflection and audit trail",
        state.events.len(),
        ORDER.len()
    ))
}
