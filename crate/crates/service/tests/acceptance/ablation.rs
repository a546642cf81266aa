use std::collections::BTreeSet;

use periop_core::aggregation::AggregationMode;
use periop_core::config::Ablation;
use periop_core::gateway::stage;
use periop_core::session::{Phase, SessionState};

use crate::common::{engine, ensure, golden, run_fixture};
use crate::Outcome;

/// Event kinds in order of first occurrence, then ledger stages.
fn shape(state: &SessionState) -> String {
    let mut seen = BTreeSet::new();
    let mut out = String::from("events:\n");
    for e in &state.events {
        if seen.insert(e.kind.as_str()) {
            out.push_str(&format!("  {}\n", e.kind));
        }
    }
    out.push_str("ledger:\n");
    for row in &state.ledger.rows {
        out.push_str(&format!("  {}\n", row.stage));
    }
    if let Some(summary) = &state.summary {
        out.push_str(&format!("sections: {}\n", summary.headings().join(" | ")));
    }
    out
}

fn has_event(state: &SessionState, kind: &str) -> bool {
    state.events_of(kind).next().is_some()
}

fn has_stage(state: &SessionState, stage: &str) -> bool {
    state.ledger.row(stage).is_some()
}

fn check(ablation: Ablation, state: &SessionState) -> Result<(), String> {
    let fail = |what: &str| format!("{ablation}: {what}");
    match ablation {
        Ablation::Planner => {
            ensure(state.trace.is_none(), || fail("search trace present"))?;
            ensure(has_event(state, "plan.direct"), || fail("no direct plan"))?;
            for kind in ["plan.candidates", "plan.scores", "plan.beam", "plan.selected"] {
                ensure(!has_event(state, kind), || fail(&format!("`{kind}` present")))?;
            }
            ensure(
                !has_stage(state, stage::EXPAND) && !has_stage(state, stage::EVALUATE) && has_stage(state, stage::DIRECT_PLAN),
                || fail("ledger still shows search stages"),
            )?;
        }
        Ablation::Memory => {
            ensure(has_event(state, "memory.full_record"), || fail("no full-record context"))?;
            for kind in ["memory.query", "memory.record", "memory.cases"] {
                ensure(!has_event(state, kind), || fail(&format!("`{kind}` present")))?;
            }
            ensure(!has_stage(state, stage::QUERY), || fail("query stage in ledger"))?;
        }
        Ablation::Departments => {
            ensure(has_event(state, "agents.generic"), || fail("no generic agent"))?;
            ensure(!has_event(state, "agents.allocated"), || fail("departments allocated"))?;
            ensure(
                !has_stage(state, stage::ALLOCATE) && !has_stage(state, stage::DEPARTMENT) && has_stage(state, stage::GENERIC),
                || fail("ledger still shows department stages"),
            )?;
            ensure(
                state.steps.iter().all(|s| s.allocation.is_none() && s.agents.len() == 1),
                || fail("more than one agent per step"),
            )?;
        }
        Ablation::Aggregation => {
            let summary = state.summary.as_ref().ok_or_else(|| fail("no summary"))?;
            ensure(summary.mode == AggregationMode::Unified, || fail("task-adaptive aggregation"))?;
            ensure(summary.sections.len() == 1, || fail("more than one section"))?;
            ensure(!has_stage(state, stage::AGGREGATE), || fail("aggregate stage in ledger"))?;
        }
    }
    Ok(())
}

pub fn run() -> Outcome {
    let baseline = run_fixture(&engine(), 0, &[]);
    let mut shapes = vec![("baseline".to_string(), shape(&baseline))];
    for ablation in Ablation::ALL {
        let state = run_fixture(&engine(), 0, &[ablation]);
        ensure(state.phase == Phase::Finalized, || format!("{ablation}: ended in {}", state.phase))?;
        ensure(state.ablation.planner == (ablation == Ablation::Planner), || format!("{ablation}: flags"))?;
        check(ablation, &state)?;
        let s = shape(&state);
        golden(&format!("p001.ablate-{ablation}.shape.txt"), &s)?;
        shapes.push((ablation.to_string(), s));
    }
    golden("p001.baseline.shape.txt", &shapes[0].1)?;
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            ensure(shapes[i].1 != shapes[j].1, || format!("{} and {} have the same trace shape", shapes[i].0, shapes[j].0))?;
        }
    }
    Ok("planner, memory, departments and aggregation variants each remove their stage; 5 distinct trace shapes".into())
}
