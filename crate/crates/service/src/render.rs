//! Plain-text rendering of sessions for the command line.

use std::fmt::Write;

use periop_core::aggregation::{Check, Verdict};
use periop_core::gateway::TokenLedger;
use periop_core::planner::{NodeStatus, SearchTrace};
use periop_core::session::SessionState;

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Unchecked => "unchecked",
    }
}

fn checks_line(checks: &[Check]) -> String {
    checks
        .iter()
        .map(|c| format!("{}={}", c.dimension.as_str(), verdict(c.verdict)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn ledger_table(ledger: &TokenLedger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>6} {:>8} {:>8} {:>8}", "stage", "calls", "input", "output", "wall_ms");
    for r in &ledger.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>8} {:>8} {:>8}",
            r.stage, r.calls, r.input_tokens, r.output_tokens, r.wall_time_ms
        );
    }
    let t = &ledger.totals;
    let _ = writeln!(
        out,
        "{:<20} {:>6} {:>8} {:>8} {:>8}",
        "total", t.calls, t.input_tokens, t.output_tokens, t.wall_time_ms
    );
    out
}

pub fn search_tree(trace: &SearchTrace) -> String {
    let mut out = String::new();
    for round in &trace.rounds {
        let _ = writeln!(out, "depth {}:", round.depth);
        for id in &round.candidates {
            let Some(n) = trace.node(*id) else { continue };
            let mark = match n.status {
                NodeStatus::Kept => "kept  ",
                NodeStatus::Pruned => "pruned",
                NodeStatus::Root => "root  ",
            };
            let score = n.score.map(|s| format!("{:.4}", s.total)).unwrap_or_else(|| "-".into());
            let last = n.steps.last().map(String::as_str).unwrap_or("");
            let _ = writeln!(
                out,
                "  n{:<3} <- n{:<3} {} {}{}  {}",
                n.id,
                n.parent_id.unwrap_or(0),
                mark,
                score,
                if n.flagged { " flagged" } else { "" },
                last
            );
        }
    }
    let _ = writeln!(
        out,
        "best n{} score {:.4}{}",
        trace.best_id,
        trace.best_score,
        if trace.truncated { " (truncated)" } else { "" }
    );
    out
}

/// Header, plan, search tree, final sections, checks and ledger.
pub fn session(state: &SessionState) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "session {}  patient {}  task {}  phase {}",
        state.session_id,
        state.patient_id,
        state.task.map(|t| t.as_str()).unwrap_or("-"),
        state.phase
    );
    let ablations = state.ablation.enabled();
    let _ = writeln!(
        out,
        "ablations: {}",
        if ablations.is_empty() {
            "none".to_string()
        } else {
            ablations.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", ")
        }
    );
    if let Some(f) = &state.failure {
        let _ = writeln!(out, "failed during {}: {}", f.phase, f.message);
    }

    if let Some(plan) = &state.plan {
        out.push_str("\n# Plan\n");
        for s in &plan.steps {
            let _ = writeln!(out, "{}. {}", s.index + 1, s.text);
        }
    }
    if let Some(trace) = &state.trace {
        out.push_str("\n# Search\n");
        out.push_str(&search_tree(trace));
    }
    if !state.steps.is_empty() {
        out.push_str("\n# Agents\n");
        for rec in &state.steps {
            let mut names: Vec<String> = rec.agents.iter().map(|a| a.agent.to_string()).collect();
            if let Some(lab) = &rec.lab {
                names.push(format!("lab[{}]", lab.selected.join(", ")));
            }
            let _ = writeln!(out, "step {}: {}", rec.step.index + 1, names.join(", "));
        }
    }

    let sections = state
        .output
        .as_ref()
        .map(|o| o.final_sections.clone())
        .or_else(|| state.reflected.as_ref().map(|r| r.summary.sections.clone()))
        .or_else(|| state.summary.as_ref().map(|s| s.sections.clone()));
    if let Some(sections) = sections {
        out.push_str("\n# Output\n");
        for s in &sections {
            let _ = writeln!(out, "## {}\n{}", s.heading, s.text);
        }
    }
    if let Some(r) = &state.reflected {
        let _ = writeln!(out, "\nchecks: {}", checks_line(&r.checks));
        if r.revised {
            if let Some(re) = &r.recheck {
                let _ = writeln!(out, "revised; recheck: {}", checks_line(re));
            }
        }
    }
    if let Some(o) = &state.output {
        if !o.audit_trail.is_empty() {
            out.push_str("\n# Audit\n");
            for a in &o.audit_trail {
                let action = format!("{:?}", a.action).to_lowercase();
                let _ = writeln!(out, "{} {} {} {}", a.seq, a.feedback_id, action, a.target);
            }
        }
    }
    out.push_str("\n# Ledger\n");
    out.push_str(&ledger_table(&state.ledger));
    out
}
