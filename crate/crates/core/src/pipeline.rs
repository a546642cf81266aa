//! The end-to-end flow: classify, plan, run agents per step, aggregate,
//! reflect, then wait for review. Each call to [`Engine::advance`] completes
//! one phase and commits the state.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use tracing::{info, warn};

use crate::agents::{run_department_agent, run_lab_agent, AgentContext, AgentId, AgentOutput, LabRun};
use crate::aggregation::{aggregate, reflect, AggregationMode, Feedback, FinalOutput, Verdict};
use crate::config::{Ablation, EngineConfig};
use crate::error::{Error, Result};
use crate::gateway::tools::ToolProvider;
use crate::gateway::{Clock, Gateway, ModelBackend};
use crate::memory::{load_long_term, Embedder, LongTermMemory, PatientProfile};
use crate::planner::{beam_search_plan, direct_plan, select_local_agents, select_task_agent, PlanStep};
use crate::session::{Phase, SessionState, StepRecord};
use crate::util::word_tokens;

/// Builds a fresh backend for each session.
pub type BackendFactory = Arc<dyn Fn() -> Result<Arc<dyn ModelBackend>> + Send + Sync>;

pub struct Engine {
    config: EngineConfig,
    store: Arc<LongTermMemory>,
    embedder: Arc<dyn Embedder>,
    tools: Arc<dyn ToolProvider>,
    backends: BackendFactory,
    clock: Arc<dyn Clock>,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        store: Arc<LongTermMemory>,
        embedder: Arc<dyn Embedder>,
        tools: Arc<dyn ToolProvider>,
        backends: BackendFactory,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        config.validate()?;
        if store.dim != embedder.dim() {
            return Err(Error::Config(format!(
                "store embeddings have dimension {} but the embedder produces {}",
                store.dim,
                embedder.dim()
            )));
        }
        Ok(Engine {
            config,
            store,
            embedder,
            tools,
            backends,
            clock,
        })
    }

    /// Loads the corpus and builds embedder, tools and backend factory from
    /// the configuration. Returns ingestion diagnostics alongside.
    pub fn from_config(config: EngineConfig, clock: Arc<dyn Clock>) -> Result<(Self, Vec<String>)> {
        config.validate()?;
        let corpus = config
            .corpus
            .clone()
            .ok_or_else(|| Error::Config("`corpus` is required".into()))?;
        let embedder: Arc<dyn Embedder> = Arc::from(config.embedder.build()?);
        let report = load_long_term(Path::new(&corpus), embedder.as_ref())?;
        let tools: Arc<dyn ToolProvider> = Arc::from(config.tools.build()?);
        let backend_config = config.backend.clone();
        backend_config.build()?;
        let backends: BackendFactory = Arc::new(move || backend_config.build());
        let engine = Engine::new(config, Arc::new(report.store), embedder, tools, backends, clock)?;
        Ok((engine, report.diagnostics))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &LongTermMemory {
        &self.store
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    pub fn new_backend(&self) -> Result<Arc<dyn ModelBackend>> {
        (self.backends)()
    }

    /// A session in `created`, after checking the patient and description.
    pub fn new_session(
        &self,
        session_id: &str,
        patient_id: &str,
        task_description: &str,
        ablations: &[Ablation],
    ) -> Result<SessionState> {
        if self.store.patient(patient_id).is_none() {
            return Err(Error::UnknownPatient(patient_id.to_string()));
        }
        if task_description.trim().is_empty() {
            return Err(Error::InvalidArgument("task description is empty".into()));
        }
        let mut flags = self.config.ablation;
        for a in ablations {
            flags.set(*a);
        }
        Ok(SessionState::new(
            session_id,
            patient_id,
            task_description.trim(),
            flags,
            self.clock.now(),
        ))
    }

    fn patient(&self, state: &SessionState) -> Result<&PatientProfile> {
        self.store
            .patient(&state.patient_id)
            .ok_or_else(|| Error::UnknownPatient(state.patient_id.clone()))
    }

    /// Completes the current phase and commits. Stage errors move the
    /// session to `failed` with a report; only commit errors are returned.
    /// Sessions awaiting review or terminal are left untouched.
    pub fn advance(
        &self,
        state: &mut SessionState,
        backend: Arc<dyn ModelBackend>,
        commit: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<()> {
        if matches!(state.phase, Phase::AwaitingReview | Phase::Finalized | Phase::Failed) {
            return Ok(());
        }
        let gateway = Gateway::with_ledger(backend, self.clock.clone(), state.ledger.clone());
        let mut commit_failed = false;
        let mut step_commit = |s: &SessionState| {
            let r = commit(s);
            commit_failed |= r.is_err();
            r
        };
        let outcome = match state.phase {
            Phase::Created => self.classify(state, &gateway),
            Phase::Planning => self.plan(state, &gateway),
            Phase::Executing => self.execute(state, &gateway, &mut step_commit),
            Phase::Aggregated => self.reflect(state, &gateway),
            Phase::Reflected => self.open_review(state),
            _ => unreachable!(),
        };
        if commit_failed {
            // The session stays at its last committed step for resumption.
            return outcome;
        }
        state.ledger = gateway.ledger();
        if let Err(e) = outcome {
            warn!(session = %state.session_id, phase = %state.phase, error = %e, "session failed");
            state.fail(e.to_string(), self.clock.now())?;
        }
        commit(state)
    }

    /// Advances until the session awaits review or fails.
    pub fn run_to_review(
        &self,
        state: &mut SessionState,
        backend: Arc<dyn ModelBackend>,
        commit: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<()> {
        while !matches!(state.phase, Phase::AwaitingReview | Phase::Finalized | Phase::Failed) {
            self.advance(state, backend.clone(), commit)?;
        }
        Ok(())
    }

    /// Creates a session, runs it to review and finalizes it without
    /// feedback. Used by the command line and replay tests.
    pub fn run_session(
        &self,
        session_id: &str,
        patient_id: &str,
        task_description: &str,
        ablations: &[Ablation],
    ) -> Result<SessionState> {
        let mut state = self.new_session(session_id, patient_id, task_description, ablations)?;
        self.run_to_review(&mut state, self.new_backend()?, &mut |_| Ok(()))?;
        if state.phase == Phase::AwaitingReview {
            finalize(&mut state, self.clock.now())?;
        }
        Ok(state)
    }

    fn classify(&self, state: &mut SessionState, gateway: &Gateway) -> Result<()> {
        let task = select_task_agent(&state.task_description, gateway)?;
        state.task = Some(task);
        state.event("task.classified", vec![task.to_string()]);
        state.transition(Phase::Planning, self.clock.now())
    }

    fn plan(&self, state: &mut SessionState, gateway: &Gateway) -> Result<()> {
        let patient = self.patient(state)?;
        let task = state.task.ok_or_else(|| Error::IllegalTransition("planning before classification".into()))?;
        if state.ablation.planner {
            let plan = direct_plan(patient, task, &self.config.planner, gateway)?;
            state.event("plan.direct", plan.texts());
            state.plan = Some(plan);
        } else {
            let (plan, trace) = beam_search_plan(patient, task, &self.config.planner, gateway)?;
            for round in &trace.rounds {
                let depth = format!("depth={}", round.depth);
                let ids = |xs: &[u32]| {
                    std::iter::once(depth.clone())
                        .chain(xs.iter().map(|id| format!("n{id}")))
                        .collect::<Vec<_>>()
                };
                state.event("plan.candidates", ids(&round.candidates));
                let scores = std::iter::once(depth.clone())
                    .chain(round.candidates.iter().filter_map(|id| {
                        let node = trace.node(*id)?;
                        Some(format!("n{id}={:.4}", node.score?.total))
                    }))
                    .collect();
                state.event("plan.scores", scores);
                state.event("plan.beam", ids(&round.beam));
            }
            state.event("plan.selected", vec![format!("n{}", trace.best_id)]);
            state.plan = Some(plan);
            state.trace = Some(trace);
        }
        state.transition(Phase::Executing, self.clock.now())
    }

    fn lab_requested(&self, step: &PlanStep) -> bool {
        if step.index == 0 {
            return true;
        }
        let keywords: BTreeSet<String> = self.config.agents.lab_keywords.iter().map(|k| k.to_lowercase()).collect();
        word_tokens(&step.text).any(|t| keywords.contains(&t))
    }

    fn execute(
        &self,
        state: &mut SessionState,
        gateway: &Gateway,
        commit: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<()> {
        let patient = self.patient(state)?;
        let task = state.task.ok_or_else(|| Error::IllegalTransition("execution before classification".into()))?;
        let plan = state
            .plan
            .clone()
            .ok_or_else(|| Error::IllegalTransition("execution before planning".into()))?;
        let mut settings = self.config.agent_settings();
        settings.memory_ablated = state.ablation.memory;
        let ctx = AgentContext {
            patient,
            task,
            store: &self.store,
            gateway,
            embedder: self.embedder.as_ref(),
            tools: self.tools.as_ref(),
            settings: &settings,
        };
        let labs = self.store.labs_for(&state.patient_id);

        // Resumes after the last committed step.
        for step in plan.steps.iter().skip(state.steps.len()) {
            state.event("step.started", vec![format!("step={}", step.index)]);
            let (allocation, agents) = if state.ablation.departments {
                state.event("agents.generic", vec![AgentId::Generic.to_string()]);
                (None, vec![AgentId::Generic])
            } else {
                let alloc = select_local_agents(patient, step, gateway);
                state.event("agents.allocated", alloc.departments.iter().map(|d| d.to_string()).collect());
                let agents = alloc.departments.iter().map(|d| AgentId::Department(*d)).collect();
                (Some(alloc), agents)
            };
            let mut outputs = Vec::with_capacity(agents.len());
            for agent in agents {
                let out = run_department_agent(&ctx, agent, step, &mut state.working)?;
                record_agent_events(state, &out);
                outputs.push(out);
            }
            let lab = if self.lab_requested(step) {
                let run = run_lab_agent(&ctx, step, &labs, &mut state.working)?;
                record_lab_events(state, &run);
                Some(run)
            } else {
                None
            };
            state.steps.push(StepRecord {
                step: step.clone(),
                allocation,
                agents: outputs,
                lab,
            });
            state.ledger = gateway.ledger();
            state.updated_at = self.clock.now();
            commit(state)?;
        }

        let mode = if state.ablation.aggregation {
            AggregationMode::Unified
        } else {
            AggregationMode::TaskAdaptive
        };
        let summary = aggregate(task, &state.working, mode, gateway)?;
        let mut refs: Vec<String> = summary.headings().iter().map(|h| h.to_string()).collect();
        refs.extend(summary.source_entry_ids.iter().cloned());
        state.event("aggregate", refs);
        state.summary = Some(summary);
        state.transition(Phase::Aggregated, self.clock.now())
    }

    fn reflect(&self, state: &mut SessionState, gateway: &Gateway) -> Result<()> {
        let summary = state
            .summary
            .as_ref()
            .ok_or_else(|| Error::IllegalTransition("reflection before aggregation".into()))?;
        let reflected = reflect(summary, gateway);
        let verdicts = |checks: &[crate::aggregation::Check]| {
            checks
                .iter()
                .map(|c| format!("{}={}", c.dimension, verdict_name(c.verdict)))
                .collect::<Vec<_>>()
        };
        state.event("reflect.check", verdicts(&reflected.checks));
        if reflected.revised {
            state.event("reflect.revise", reflected.summary.headings().iter().map(|h| h.to_string()).collect());
            if let Some(r) = &reflected.recheck {
                state.event("reflect.recheck", verdicts(r));
            }
        }
        state.reflected = Some(reflected);
        state.transition(Phase::Reflected, self.clock.now())
    }

    fn open_review(&self, state: &mut SessionState) -> Result<()> {
        let reflected = state
            .reflected
            .clone()
            .ok_or_else(|| Error::IllegalTransition("review before reflection".into()))?;
        let output = FinalOutput::new(state.session_id.clone(), reflected);
        state.event(
            "review.opened",
            output.final_sections.iter().map(|s| s.heading.clone()).collect(),
        );
        state.output = Some(output);
        info!(session = %state.session_id, "awaiting review");
        state.transition(Phase::AwaitingReview, self.clock.now())
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Unchecked => "unchecked",
    }
}

fn record_agent_events(state: &mut SessionState, out: &AgentOutput) {
    if out.flags.iter().any(|f| f == "full-record-context") {
        state.event("memory.full_record", vec![out.agent.to_string()]);
    }
    if let Some(q) = &out.query {
        state.event("memory.query", vec![out.agent.to_string(), q.clone()]);
        state.event(
            "memory.record",
            out.cited_record_id().map(|r| vec![r.to_string()]).unwrap_or_default(),
        );
        state.event(
            "memory.cases",
            out.cited_case_ids().into_iter().map(String::from).collect(),
        );
    }
    state.event("agent.output", vec![out.agent.to_string(), out.entry_id.clone()]);
    state.event("memory.append", vec![out.entry_id.clone()]);
}

fn record_lab_events(state: &mut SessionState, run: &LabRun) {
    state.event("lab.abnormal", run.abnormal.clone());
    state.event("lab.selected", run.selected.clone());
    for a in &run.analyses {
        let mut refs = vec![a.item.name.clone()];
        refs.extend(a.evidence.iter().map(|e| e.evidence_id.clone()));
        state.event("lab.evidence", refs);
        state.event("lab.analysis", vec![a.item.name.clone(), a.entry_id.clone()]);
        state.event("memory.append", vec![a.entry_id.clone()]);
    }
}

/// Applies one feedback submission to a session awaiting review.
pub fn submit_feedback(
    state: &mut SessionState,
    feedback: &Feedback,
    now: chrono::DateTime<chrono::Utc>,
) -> Result<FinalOutput> {
    if state.phase != Phase::AwaitingReview {
        return Err(Error::IllegalTransition(format!(
            "feedback is accepted only while awaiting review; session `{}` is {}",
            state.session_id, state.phase
        )));
    }
    let current = state
        .output
        .as_ref()
        .ok_or_else(|| Error::IllegalTransition("no output to review".into()))?;
    let duplicate = current.has_applied(&feedback.feedback_id);
    let updated = current.apply(feedback)?;
    if !duplicate {
        let mut refs = vec![feedback.feedback_id.clone()];
        refs.extend(feedback.directives.iter().map(|d| d.target.clone()));
        state.event("feedback.applied", refs);
        state.output = Some(updated.clone());
        state.updated_at = now;
    }
    Ok(updated)
}

/// Finalizes a session awaiting review. Finalizing a finalized session
/// returns the same output.
pub fn finalize(state: &mut SessionState, now: chrono::DateTime<chrono::Utc>) -> Result<FinalOutput> {
    match state.phase {
        Phase::Finalized => state
            .output
            .clone()
            .ok_or_else(|| Error::IllegalTransition("finalized session has no output".into())),
        Phase::AwaitingReview => {
            let output = state
                .output
                .as_mut()
                .ok_or_else(|| Error::IllegalTransition("no output to finalize".into()))?;
            output.finalized_at = Some(now);
            let output = output.clone();
            state.working.close();
            state.event("output.finalized", vec![format!("sections={}", output.final_sections.len())]);
            state.transition(Phase::Finalized, now)?;
            Ok(output)
        }
        other => Err(Error::IllegalTransition(format!(
            "session `{}` is {other}; only sessions awaiting review can be finalized",
            state.session_id
        ))),
    }
}
